//! Taylor jets, the local approximation step, piecewise assembly and
//! residual certificates.
//!
//! Every piece is built so that its residual `T(x,D)P(x) − f(x)` sits in the
//! middle of a one-sided band at the piece's center, then the piece is kept
//! only on a neighbourhood where the whole residual stays inside the band.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{sample_points, skeleton_of, BoxN, CellPartition, DomainError, Location, Skeleton};
use crate::expr::{EvalError, MultiIndexSet, PdeSystem, RhsExprs, Slot};

/// Slack added on both sides of a band before a residual counts as outside.
pub const DEFAULT_ETA: f64 = 1e-9;
/// Accepted `|F_i(x0, ξ) − target_i|` after a jet solve.
pub const SOLVE_TOL: f64 = 1e-10;
const BISECT_WIDTH: f64 = 1e-12;
const SCAN_LIMIT: f64 = 1e6;
const MAX_SWEEPS: usize = 50;
const BISECT_STEPS: usize = 32;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ApproxError {
    #[error(
        "range violation in component {component} at {x0:?}: no jet value reaches {target} \
         (the right-hand side is outside the operator's range there, or the pivot slot \
         {pivot} cannot reach it)"
    )]
    RangeViolation {
        component: usize,
        x0: Vec<f64>,
        target: f64,
        pivot: String,
    },
    #[error("component {component} references no jet slot that is free to solve for")]
    NoPivot { component: usize },
    #[error("bad pivot list: {0}")]
    BadPivot(String),
    #[error("validity radius fell to {delta:e} near {x0:?} without the band check passing")]
    DeltaCollapse { x0: Vec<f64>, delta: f64 },
    #[error("band [{lower}, {upper}] is empty or not finite")]
    BadBand { lower: f64, upper: f64 },
    #[error("right-hand side at {x:?}: {err}")]
    Rhs { x: Vec<f64>, err: EvalError },
    #[error("operator at {x:?}: {err}")]
    Operator { x: Vec<f64>, err: EvalError },
    #[error("point {0:?} lies on the skeleton")]
    OnSkeleton(Vec<f64>),
    #[error("point {0:?} lies outside the domain")]
    Outside(Vec<f64>),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Right-hand side `f : Ω → R^K`.
pub trait Rhs: Sync {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
}

impl Rhs for RhsExprs {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        RhsExprs::eval(self, x)
    }
}

impl<F> Rhs for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(self(x))
    }
}

fn rhs_at(rhs: &dyn Rhs, x: &[f64], k: usize) -> Result<Vec<f64>, ApproxError> {
    let v = rhs.eval(x).map_err(|err| ApproxError::Rhs {
        x: x.to_vec(),
        err,
    })?;
    if v.len() != k {
        return Err(ApproxError::Shape {
            expected: k,
            got: v.len(),
        });
    }
    if v.iter().any(|t| !t.is_finite()) {
        return Err(ApproxError::Rhs {
            x: x.to_vec(),
            err: EvalError::NonFinite,
        });
    }
    Ok(v)
}

/// Admissible residual range `[lower, upper]`, relative to `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ApproxError> {
        if lower.is_finite() && upper.is_finite() && lower < upper {
            Ok(Band { lower, upper })
        } else {
            Err(ApproxError::BadBand { lower, upper })
        }
    }

    /// `[−ε, 0]`: approximation from below.
    pub fn below(eps: f64) -> Result<Self, ApproxError> {
        Band::new(-eps, 0.0)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// How far below `f` the band reaches.
    pub fn eps(&self) -> f64 {
        -self.lower
    }

    pub fn contains(&self, r: f64, eta: f64) -> bool {
        r >= self.lower - eta && r <= self.upper + eta
    }

    /// Distance outside the band, 0 inside.
    pub fn excess(&self, r: f64) -> f64 {
        (self.lower - r).max(r - self.upper).max(0.0)
    }
}

/// Derivative values `ξ_{jα}` prescribed at `x0`, laid out as in
/// [`PdeSystem::slot_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoint {
    pub x0: Vec<f64>,
    pub xi: Vec<f64>,
}

impl JetPoint {
    pub fn zero(sys: &PdeSystem, x0: &[f64]) -> Self {
        JetPoint {
            x0: x0.to_vec(),
            xi: vec![0.0; sys.jet_len()],
        }
    }

    pub fn get(&self, sys: &PdeSystem, slot: &Slot) -> Option<f64> {
        sys.slot_index(slot).map(|i| self.xi[i])
    }
}

/// Precomputed derivative table for polynomials `Σ_β c_β (x − x0)^β`, `|β| ≤ m`.
#[derive(Clone, Debug)]
pub struct TaylorBasis {
    alphas: MultiIndexSet,
    factorials: Vec<f64>,
    /// per α: `(β index, β!/(β−α)!, offset into exps)`
    terms: Vec<Vec<(usize, f64, usize)>>,
    exps: Vec<u32>,
}

impl TaylorBasis {
    pub fn new(alphas: MultiIndexSet) -> Self {
        let n = alphas.dim();
        let list = alphas.alphas();
        let factorials = list.iter().map(|a| a.factorial()).collect();
        let mut exps = Vec::new();
        let terms = list
            .iter()
            .map(|a| {
                list.iter()
                    .enumerate()
                    .filter(|(_, b)| b.dominates(a))
                    .map(|(bi, b)| {
                        let mut factor = 1.0;
                        for d in 0..n {
                            for t in (b.0[d] - a.0[d] + 1)..=b.0[d] {
                                factor *= t as f64;
                            }
                        }
                        let off = exps.len();
                        exps.extend((0..n).map(|d| b.0[d] - a.0[d]));
                        (bi, factor, off)
                    })
                    .collect()
            })
            .collect();
        TaylorBasis {
            alphas,
            factorials,
            terms,
            exps,
        }
    }

    pub fn alphas(&self) -> &MultiIndexSet {
        &self.alphas
    }

    fn per(&self) -> usize {
        self.alphas.len()
    }
}

/// One polynomial per component, expanded around `center`:
/// `P_j(x) = Σ_α c_{jα} (x − center)^α` with `c_{jα} = ξ_{jα} / α!`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorPiece {
    center: Vec<f64>,
    coeffs: Vec<f64>,
}

/// The polynomial realising a jet: `D^α P_j(x0) = ξ_{jα}`.
pub fn taylor_poly(basis: &TaylorBasis, jet: &JetPoint) -> TaylorPiece {
    let per = basis.per();
    let coeffs = jet
        .xi
        .iter()
        .enumerate()
        .map(|(i, v)| v / basis.factorials[i % per])
        .collect();
    TaylorPiece {
        center: jet.x0.clone(),
        coeffs,
    }
}

impl TaylorPiece {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn components(&self, basis: &TaylorBasis) -> usize {
        self.coeffs.len() / basis.per()
    }

    /// Every `D^α P_j(x)`, in jet layout.
    pub fn jet_into(&self, basis: &TaylorBasis, x: &[f64], out: &mut [f64]) {
        let n = self.center.len();
        let m = basis.alphas.max_order() as usize;
        let per = basis.per();
        // powers[d * (m + 1) + e] = (x_d − c_d)^e
        let mut powers = [0.0f64; 64];
        let mut heap;
        let powers: &mut [f64] = if n * (m + 1) <= 64 {
            &mut powers[..n * (m + 1)]
        } else {
            heap = vec![0.0; n * (m + 1)];
            &mut heap
        };
        for d in 0..n {
            let h = x[d] - self.center[d];
            let mut p = 1.0;
            for e in 0..=m {
                powers[d * (m + 1) + e] = p;
                p *= h;
            }
        }
        let k = self.coeffs.len() / per;
        for j in 0..k {
            let c = &self.coeffs[j * per..(j + 1) * per];
            for (a, terms) in basis.terms.iter().enumerate() {
                let mut s = 0.0;
                for &(b, factor, off) in terms {
                    let mut t = factor * c[b];
                    for d in 0..n {
                        t *= powers[d * (m + 1) + basis.exps[off + d] as usize];
                    }
                    s += t;
                }
                out[j * per + a] = s;
            }
        }
    }

    pub fn jet_at(&self, basis: &TaylorBasis, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs.len()];
        self.jet_into(basis, x, &mut out);
        out
    }

    /// `P_j(x)`.
    pub fn value(&self, basis: &TaylorBasis, j: usize, x: &[f64]) -> f64 {
        let zero = basis
            .alphas
            .index_of(&crate::expr::MultiIndex::zero(self.center.len()))
            .expect("zero multi-index is always present");
        self.jet_at(basis, x)[j * basis.per() + zero]
    }
}

/// Jet positions of the slots solved for, one per component.
///
/// Component `i` prefers its own zeroth-order slot, then its own derivative
/// slots, then any other referenced slot, skipping slots already taken.
pub fn default_pivots(sys: &PdeSystem) -> Result<Vec<Slot>, ApproxError> {
    let mut taken: Vec<Slot> = Vec::new();
    for (i, e) in sys.components().iter().enumerate() {
        let refs = e.slots();
        let own_zero: Vec<&Slot> = refs
            .iter()
            .filter(|s| s.component == i && s.alpha.order() == 0)
            .collect();
        let own_deriv = refs.iter().filter(|s| s.component == i && s.alpha.order() > 0);
        let other_deriv = refs.iter().filter(|s| s.component != i && s.alpha.order() > 0);
        let other_zero = refs.iter().filter(|s| s.component != i && s.alpha.order() == 0);
        let pick = own_zero
            .into_iter()
            .chain(own_deriv)
            .chain(other_deriv)
            .chain(other_zero)
            .find(|s| !taken.contains(s))
            .ok_or(ApproxError::NoPivot { component: i + 1 })?;
        taken.push(pick.clone());
    }
    Ok(taken)
}

fn pivot_indices(sys: &PdeSystem, pivots: &[Slot]) -> Result<Vec<usize>, ApproxError> {
    if pivots.len() != sys.unknowns() {
        return Err(ApproxError::BadPivot(format!(
            "{} pivots for {} components",
            pivots.len(),
            sys.unknowns()
        )));
    }
    let idx = pivots
        .iter()
        .map(|s| {
            sys.slot_index(s)
                .ok_or_else(|| ApproxError::BadPivot(format!("slot {s:?} is not in the jet")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (a, i) in idx.iter().enumerate() {
        if idx[..a].contains(i) {
            return Err(ApproxError::BadPivot("pivot slots must be distinct".into()));
        }
    }
    Ok(idx)
}

/// Root of a scalar function: geometric bracket scan around `t0`, then
/// bisection. `g` returns `None` where it is undefined.
fn solve_scalar(mut g: impl FnMut(f64) -> Option<f64>, t0: f64) -> Option<f64> {
    let g0 = g(t0);
    if let Some(v) = g0 {
        if v.abs() <= SOLVE_TOL * 1e-2 {
            return Some(t0);
        }
    }
    let mut sides = [(t0, g0), (t0, g0)];
    let mut s = 1.0;
    let mut bracket = None;
    'scan: while s <= SCAN_LIMIT {
        for (k, dir) in [1.0, -1.0].into_iter().enumerate() {
            let t = t0 + dir * s;
            if let Some(v) = g(t) {
                if v == 0.0 {
                    return Some(t);
                }
                if let (pt, Some(pv)) = sides[k] {
                    if pv.signum() != v.signum() {
                        bracket = Some((pt, pv, t, v));
                        break 'scan;
                    }
                }
                sides[k] = (t, Some(v));
            }
        }
        s *= 2.0;
    }
    let (mut a, mut ga, mut b, mut gb) = bracket?;
    for _ in 0..400 {
        let done = (b - a).abs() <= BISECT_WIDTH && ga.abs().min(gb.abs()) <= SOLVE_TOL;
        let mid = 0.5 * (a + b);
        if done || mid == a || mid == b {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Some(mid);
        }
        if gm.signum() == ga.signum() {
            a = mid;
            ga = gm;
        } else {
            b = mid;
            gb = gm;
        }
    }
    Some(if ga.abs() <= gb.abs() { a } else { b })
}

/// Find `ξ` with `F_i(x0, ξ) = target_i`, changing only the pivot slots.
///
/// Pivots are solved one component at a time, repeated in sweeps when a
/// component's equation also reads another component's pivot.
pub fn solve_jet(
    sys: &PdeSystem,
    x0: &[f64],
    target: &[f64],
    anchor: Option<&JetPoint>,
    pivots: Option<&[Slot]>,
) -> Result<JetPoint, ApproxError> {
    let k = sys.unknowns();
    if target.len() != k {
        return Err(ApproxError::Shape {
            expected: k,
            got: target.len(),
        });
    }
    let slots = match pivots {
        Some(p) => p.to_vec(),
        None => default_pivots(sys)?,
    };
    let piv = pivot_indices(sys, &slots)?;
    let mut xi = match anchor {
        Some(a) => {
            if a.xi.len() != sys.jet_len() {
                return Err(ApproxError::Shape {
                    expected: sys.jet_len(),
                    got: a.xi.len(),
                });
            }
            a.xi.clone()
        }
        None => vec![0.0; sys.jet_len()],
    };
    let violation = |i: usize| ApproxError::RangeViolation {
        component: i + 1,
        x0: x0.to_vec(),
        target: target[i],
        pivot: sys.slot_at(piv[i]).to_string(),
    };
    let err_of = |xi: &[f64], i: usize| {
        sys.eval_component(i, x0, xi)
            .map(|v| (v - target[i]).abs())
            .unwrap_or(f64::INFINITY)
    };
    for _ in 0..MAX_SWEEPS {
        for i in 0..k {
            if err_of(&xi, i) <= SOLVE_TOL * 1e-2 {
                continue;
            }
            let p = piv[i];
            let mut work = xi.clone();
            let t = solve_scalar(
                |t| {
                    work[p] = t;
                    sys.eval_component(i, x0, &work).ok().map(|v| v - target[i])
                },
                xi[p],
            );
            match t {
                Some(t) => xi[p] = t,
                None => return Err(violation(i)),
            }
        }
        if (0..k).all(|i| err_of(&xi, i) <= SOLVE_TOL) {
            return Ok(JetPoint {
                x0: x0.to_vec(),
                xi,
            });
        }
    }
    let worst = (0..k)
        .max_by(|&a, &b| err_of(&xi, a).total_cmp(&err_of(&xi, b)))
        .unwrap_or(0);
    Err(violation(worst))
}

/// Validation grid nodes per axis for an `n`-dimensional box.
pub fn validation_grid(n: usize) -> usize {
    match n {
        1 => 9,
        2 => 5,
        _ => 3,
    }
}

/// Whether the residual of `piece` stays in the band on a closed `q`-point
/// tensor grid over `b`.
#[allow(clippy::too_many_arguments)]
fn band_holds(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    basis: &TaylorBasis,
    piece: &TaylorPiece,
    b: &BoxN,
    band: Band,
    eta: f64,
    q: usize,
) -> bool {
    let n = b.dim();
    let k = sys.unknowns();
    let mut jet = vec![0.0; sys.jet_len()];
    let mut x = vec![0.0; n];
    let total = q.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for d in (0..n).rev() {
            let i = c % q;
            c /= q;
            let (lo, hi) = (b.lower()[d], b.upper()[d]);
            x[d] = if q == 1 {
                0.5 * (lo + hi)
            } else if i + 1 == q {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (q - 1) as f64
            };
        }
        piece.jet_into(basis, &x, &mut jet);
        let f = match rhs.eval(&x) {
            Ok(f) if f.len() == k => f,
            _ => return false,
        };
        for (i, fi) in f.iter().enumerate() {
            match sys.eval_component(i, &x, &jet) {
                Ok(v) if band.contains(v - fi, eta) => {}
                _ => return false,
            }
        }
    }
    true
}

/// Radius search parameters for [`local_approx`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusSearch {
    /// First radius tried.
    pub start: f64,
    /// Give up below this radius.
    pub floor: f64,
    pub eta: f64,
    /// Validation nodes per axis.
    pub grid: usize,
}

impl RadiusSearch {
    pub fn for_domain(domain: &BoxN, start: f64, eta: f64) -> Self {
        let width = (0..domain.dim())
            .map(|d| domain.width(d))
            .fold(0.0, f64::max);
        RadiusSearch {
            start,
            floor: 1e-6 * width,
            eta,
            grid: validation_grid(domain.dim()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalApprox {
    /// Half-width of the cube around `x0` on which the band holds.
    pub delta: f64,
    pub jet: JetPoint,
    pub piece: TaylorPiece,
}

fn solve_at(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    basis: &TaylorBasis,
    x0: &[f64],
    band: Band,
) -> Result<(JetPoint, TaylorPiece), ApproxError> {
    let target: Vec<f64> = rhs_at(rhs, x0, sys.unknowns())?
        .into_iter()
        .map(|v| v + band.mid())
        .collect();
    let jet = solve_jet(sys, x0, &target, None, None)?;
    let piece = taylor_poly(basis, &jet);
    Ok((jet, piece))
}

/// A piece whose residual is the band midpoint at `x0`, and a radius on which
/// the residual stays inside the band.
///
/// The radius is halved from `search.start` until the band check passes on
/// `[x0 − δ, x0 + δ]^n ∩ domain`, then pushed back up by bisection.
pub fn local_approx(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    x0: &[f64],
    band: Band,
    domain: &BoxN,
    search: &RadiusSearch,
) -> Result<LocalApprox, ApproxError> {
    let basis = TaylorBasis::new(sys.alphas().clone());
    local_approx_with(sys, rhs, &basis, x0, band, domain, search)
}

fn local_approx_with(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    basis: &TaylorBasis,
    x0: &[f64],
    band: Band,
    domain: &BoxN,
    search: &RadiusSearch,
) -> Result<LocalApprox, ApproxError> {
    let (jet, piece) = solve_at(sys, rhs, basis, x0, band)?;
    let holds = |r: f64| {
        band_holds(
            sys,
            rhs,
            basis,
            &piece,
            &domain.clip_cube(x0, r),
            band,
            search.eta,
            search.grid,
        )
    };
    let mut delta = search.start;
    while !holds(delta) {
        delta *= 0.5;
        if delta < search.floor {
            return Err(ApproxError::DeltaCollapse {
                x0: x0.to_vec(),
                delta,
            });
        }
    }
    if delta < search.start {
        let (mut lo, mut hi) = (delta, (2.0 * delta).min(search.start));
        for _ in 0..BISECT_STEPS {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        delta = lo;
    }
    Ok(LocalApprox { delta, jet, piece })
}

/// `U_ε`: one Taylor piece per subcell, smooth off the skeleton.
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    partition: CellPartition,
    skeleton: Skeleton,
    basis: Arc<TaylorBasis>,
    pieces: Vec<TaylorPiece>,
}

impl PiecewisePoly {
    /// Pieces in subcell order; each center must lie in its closed subcell.
    pub fn new(
        partition: CellPartition,
        basis: TaylorBasis,
        pieces: Vec<TaylorPiece>,
    ) -> Result<Self, ApproxError> {
        if pieces.len() != partition.subcell_total() {
            return Err(ApproxError::Shape {
                expected: partition.subcell_total(),
                got: pieces.len(),
            });
        }
        for (i, p) in pieces.iter().enumerate() {
            if !partition.subcell(i).contains(&p.center) {
                return Err(ApproxError::Outside(p.center.clone()));
            }
        }
        let skeleton = skeleton_of(&partition);
        Ok(PiecewisePoly {
            partition,
            skeleton,
            basis: Arc::new(basis),
            pieces,
        })
    }

    pub fn partition(&self) -> &CellPartition {
        &self.partition
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn basis(&self) -> &TaylorBasis {
        &self.basis
    }

    pub fn pieces(&self) -> &[TaylorPiece] {
        &self.pieces
    }

    pub fn piece_mut(&mut self, i: usize) -> &mut TaylorPiece {
        &mut self.pieces[i]
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn piece_for(&self, x: &[f64]) -> Result<(usize, &TaylorPiece), ApproxError> {
        match self.partition.locate(x) {
            Location::Subcell(i) => Ok((i, &self.pieces[i])),
            Location::OnSkeleton => Err(ApproxError::OnSkeleton(x.to_vec())),
            Location::Outside => Err(ApproxError::Outside(x.to_vec())),
        }
    }

    /// All derivatives of all components at `x`, off the skeleton only.
    pub fn jet_at(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let (_, p) = self.piece_for(x)?;
        Ok(p.jet_at(&self.basis, x))
    }

    /// `U_j(x)`, off the skeleton only.
    pub fn value(&self, j: usize, x: &[f64]) -> Result<f64, ApproxError> {
        let (_, p) = self.piece_for(x)?;
        Ok(p.value(&self.basis, j, x))
    }
}

/// `T(x,D)U(x)`. Undefined on the skeleton and outside the domain.
pub fn apply_operator(sys: &PdeSystem, u: &PiecewisePoly, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
    let jet = u.jet_at(x)?;
    sys.eval(x, &jet).map_err(|err| ApproxError::Operator {
        x: x.to_vec(),
        err,
    })
}

/// `T(x,D)U(x) − f(x)`.
pub fn residual(
    sys: &PdeSystem,
    u: &PiecewisePoly,
    rhs: &dyn Rhs,
    x: &[f64],
) -> Result<Vec<f64>, ApproxError> {
    let t = apply_operator(sys, u, x)?;
    let f = rhs_at(rhs, x, sys.unknowns())?;
    Ok(t.iter().zip(&f).map(|(a, b)| a - b).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStats {
    pub samples: usize,
    pub min_residual: f64,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Offender {
    /// 1-based.
    pub component: usize,
    pub point: Vec<f64>,
    pub residual: f64,
    pub subcell: usize,
}

/// Sampled evidence that every residual lies in `[lower − η, upper + η]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCertificate {
    pub band: Band,
    pub eta: f64,
    pub components: Vec<ComponentStats>,
    /// Worst samples outside the band, largest excess first.
    pub offenders: Vec<Offender>,
    /// Set when there were no samples to check.
    pub insufficient: bool,
}

pub const CERTIFICATE_HEADER: &str = "component,samples,min_residual,max_residual,eps,eta,pass";
const MAX_OFFENDERS: usize = 10;

impl ResidualCertificate {
    pub fn pass(&self) -> bool {
        self.components.iter().all(|c| c.pass)
    }

    pub fn eps(&self) -> f64 {
        self.band.eps()
    }

    pub fn samples(&self) -> usize {
        self.components.first().map_or(0, |c| c.samples)
    }

    pub fn min_residual(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.min_residual)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_residual(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_residual)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV rows below [`CERTIFICATE_HEADER`], one per component.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.components.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i + 1,
                c.samples,
                c.min_residual,
                c.max_residual,
                self.eps(),
                self.eta,
                c.pass
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{CERTIFICATE_HEADER}\n{}", self.csv_rows())
    }
}

impl fmt::Display for ResidualCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "band [{}, {}] eta {}: {} samples, residual in [{}, {}], {}",
            self.band.lower,
            self.band.upper,
            self.eta,
            self.samples(),
            self.min_residual(),
            self.max_residual(),
            if self.pass() { "pass" } else { "FAIL" }
        )?;
        if self.insufficient {
            f.write_str(" (insufficient: no samples)")?;
        }
        Ok(())
    }
}

/// Residual statistics over `samples`, none of which may lie on the skeleton.
pub fn check_residual(
    sys: &PdeSystem,
    u: &PiecewisePoly,
    rhs: &dyn Rhs,
    band: Band,
    eta: f64,
    samples: &[Vec<f64>],
) -> Result<ResidualCertificate, ApproxError> {
    let k = sys.unknowns();
    let rows: Vec<(usize, Vec<f64>)> = samples
        .par_iter()
        .map(|x| {
            let (i, _) = u.piece_for(x)?;
            Ok((i, residual(sys, u, rhs, x)?))
        })
        .collect::<Result<_, ApproxError>>()?;
    let mut components = vec![
        ComponentStats {
            samples: rows.len(),
            min_residual: f64::INFINITY,
            max_residual: f64::NEG_INFINITY,
            pass: true,
        };
        k
    ];
    let mut offenders = Vec::new();
    for (s, (cell, r)) in rows.iter().enumerate() {
        for (i, &v) in r.iter().enumerate() {
            let c = &mut components[i];
            c.min_residual = c.min_residual.min(v);
            c.max_residual = c.max_residual.max(v);
            if !band.contains(v, eta) {
                c.pass = false;
                offenders.push(Offender {
                    component: i + 1,
                    point: samples[s].clone(),
                    residual: v,
                    subcell: *cell,
                });
            }
        }
    }
    offenders.sort_by(|a, b| band.excess(b.residual).total_cmp(&band.excess(a.residual)));
    offenders.truncate(MAX_OFFENDERS);
    Ok(ResidualCertificate {
        band,
        eta,
        components,
        offenders,
        insufficient: rows.is_empty(),
    })
}

/// Knobs for [`global_approx`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxOptions {
    pub eta: f64,
    pub samples_per_cell: usize,
    /// Certificate sample floor; per-subcell counts are raised to reach it.
    pub min_samples: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            eta: DEFAULT_ETA,
            samples_per_cell: 8,
            min_samples: 10_000,
            margin: 0.05,
            seed: 0,
        }
    }
}

/// Piecewise approximation with residual in `band` on the whole domain.
///
/// A `3^n` probe grid per cell fixes the subdivision radius; every subcell
/// then gets its own piece centered at its midpoint, validated on the closed
/// subcell. If any subcell fails, the radius is halved and the pass repeats.
pub fn global_approx(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    p: &CellPartition,
    band: Band,
    opts: &ApproxOptions,
) -> Result<(PiecewisePoly, ResidualCertificate), ApproxError> {
    let basis = TaylorBasis::new(sys.alphas().clone());
    let domain = p.bounds();
    let probes: Vec<(Vec<f64>, f64)> = p
        .cells()
        .iter()
        .flat_map(|c| {
            let d = c.bounds().diameter();
            c.bounds().grid(3).into_iter().map(move |x| (x, d))
        })
        .collect();
    let floor = RadiusSearch::for_domain(domain, 1.0, opts.eta).floor;
    let delta_min = probes
        .par_iter()
        .map(|(x, d)| {
            let search = RadiusSearch::for_domain(domain, *d, opts.eta);
            local_approx_with(sys, rhs, &basis, x, band, domain, &search).map(|l| l.delta)
        })
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let q = validation_grid(p.dim());
    let mut delta = delta_min;
    loop {
        // the radius came out of a bisection; absorb its last-digit noise
        let sub = p.subdivide(delta * (1.0 + 1e-6))?;
        let built: Vec<(TaylorPiece, bool)> = (0..sub.subcell_total())
            .into_par_iter()
            .map(|i| {
                let b = sub.subcell(i);
                let (_, piece) = solve_at(sys, rhs, &basis, &b.center(), band)?;
                let ok = band_holds(sys, rhs, &basis, &piece, &b, band, opts.eta, q);
                Ok((piece, ok))
            })
            .collect::<Result<_, ApproxError>>()?;
        if let Some(bad) = built.iter().position(|(_, ok)| !ok) {
            delta *= 0.5;
            if delta < floor {
                return Err(ApproxError::DeltaCollapse {
                    x0: sub.subcell(bad).center(),
                    delta,
                });
            }
            continue;
        }
        let pieces = built.into_iter().map(|(p, _)| p).collect();
        let u = PiecewisePoly::new(sub, basis, pieces)?;
        let per_cell = opts
            .samples_per_cell
            .max(opts.min_samples.div_ceil(u.len()))
            .max(1);
        let samples = sample_points(u.partition(), per_cell, opts.margin, opts.seed)?;
        let cert = check_residual(sys, &u, rhs, band, opts.eta, &samples)?;
        return Ok((u, cert));
    }
}
