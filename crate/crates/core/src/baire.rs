//! Extended-real grid functions and the lower/upper Baire operators.
//!
//! A [`GridFn`] lives on a tensor lattice. Its skeleton mask marks the nodes
//! that lie on a closed nowhere dense set `Γ`. The lattice carries the finite
//! topology in which an unmasked node is an open point and a masked node's
//! smallest neighbourhood is itself plus its unmasked stencil neighbours
//! (the `3^n − 1` nodes at index distance one). In that topology
//!
//! ```text
//! I(f)(x) = sup_V inf_{y ∈ V} f(y) = min { f(y) : y ∈ U_x }
//! S(f)(x) = inf_V sup_{y ∈ V} f(y) = max { f(y) : y ∈ U_x }
//! ```
//!
//! so functions are left untouched off `Γ` and regularised on it, and
//! `I`, `S`, `I∘S` are exactly idempotent on the grid.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Neg;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::approx::{apply_operator, ApproxError, PiecewisePoly};
use crate::domain::{tensor_points, BoxN, CellPartition, Skeleton};
use crate::expr::PdeSystem;

/// A value of `R̄ = R ∪ {±∞}`. NaN is not representable.
#[derive(Clone, Copy, Debug)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Map an `f64` into `R̄`; `None` for NaN. `-0.0` is stored as `0.0`.
    pub fn new(v: f64) -> Option<Self> {
        if v.is_nan() {
            None
        } else if v == f64::INFINITY {
            Some(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Some(ExtReal::NegInf)
        } else {
            Some(ExtReal::Finite(v + 0.0))
        }
    }

    pub fn finite(v: f64) -> Self {
        Self::new(v).expect("NaN is not an extended real")
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// `b − a` as a nonnegative spread for `a ≤ b`; equal infinities give 0.
    pub fn gap(a: ExtReal, b: ExtReal) -> f64 {
        if a == b {
            0.0
        } else {
            b.to_f64() - a.to_f64()
        }
    }
}

impl PartialEq for ExtReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b).expect("finite values are never NaN"),
        }
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::PosInf => ExtReal::NegInf,
            ExtReal::Finite(v) => ExtReal::Finite(0.0 - v),
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN.
    fn from(v: f64) -> Self {
        ExtReal::finite(v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::PosInf => f.write_str("inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for ExtReal {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "+inf" => Ok(ExtReal::PosInf),
            "-inf" => Ok(ExtReal::NegInf),
            t => t
                .parse::<f64>()
                .ok()
                .and_then(ExtReal::new)
                .ok_or_else(|| GridError::Csv(format!("bad value {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GridError {
    #[error("lattice axis {0} is empty or not strictly increasing")]
    NotIncreasing(usize),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("masked node {0} has no unmasked neighbour: mask is not nowhere dense")]
    MaskHasInterior(usize),
    #[error("grid functions live on different lattices")]
    LatticeMismatch,
    #[error("NaN is not an extended real (node {0})")]
    NaN(usize),
    #[error("lattice node {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("sample at {x:?}: {reason}")]
    Sample { x: Vec<f64>, reason: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Tensor lattice: strictly increasing sample coordinates per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self, GridError> {
        for (d, a) in axes.iter().enumerate() {
            if a.is_empty() || a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(GridError::NotIncreasing(d));
            }
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        Ok(Lattice { axes, strides })
    }

    /// `nodes[d]` evenly spaced nodes per axis, endpoints included.
    pub fn uniform(bounds: &BoxN, nodes: &[usize]) -> Result<Self, GridError> {
        let axes = (0..bounds.dim())
            .map(|d| {
                let (a, b) = (bounds.lower()[d], bounds.upper()[d]);
                let k = nodes.get(d).copied().unwrap_or(2).max(2);
                (0..k)
                    .map(|i| {
                        if i + 1 == k {
                            b
                        } else {
                            a + (b - a) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Lattice::new(axes)
    }

    /// Every subcell breakpoint plus `per_subcell − 1` evenly spaced interior
    /// nodes in each subcell interval, so skeleton nodes coincide exactly
    /// with lattice nodes.
    pub fn conforming(p: &CellPartition, per_subcell: usize) -> Result<Self, GridError> {
        let r = per_subcell.max(1);
        let axes = (0..p.dim())
            .map(|d| {
                let br = p.axis_breaks(d);
                let mut axis = Vec::with_capacity((br.len() - 1) * r + 1);
                for w in br.windows(2) {
                    for i in 0..r {
                        axis.push(if i == 0 {
                            w[0]
                        } else {
                            w[0] + (w[1] - w[0]) * i as f64 / r as f64
                        });
                    }
                }
                axis.push(*br.last().expect("nonempty"));
                axis
            })
            .collect();
        Lattice::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(s, a)| (node / s) % a.len())
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a[i])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        tensor_points(&self.axes)
    }

    /// Nodes at index distance exactly one (the `3^n − 1` stencil, clipped).
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let idx = self.multi_index(node);
        let n = self.dim();
        let mut out = Vec::new();
        let total = 3usize.pow(n as u32);
        'outer: for code in 0..total {
            let mut c = code;
            let mut flat = 0;
            let mut is_center = true;
            for d in (0..n).rev() {
                let off = (c % 3) as isize - 1;
                c /= 3;
                if off != 0 {
                    is_center = false;
                }
                let j = idx[d] as isize + off;
                if j < 0 || j >= self.axes[d].len() as isize {
                    continue 'outer;
                }
                flat += j as usize * self.strides[d];
            }
            if !is_center {
                out.push(flat);
            }
        }
        out
    }
}

/// Extended-real samples on a lattice plus a skeleton mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    lattice: Lattice,
    values: Vec<ExtReal>,
    mask: Vec<bool>,
}

impl GridFn {
    /// Unmasked grid function.
    pub fn new(lattice: Lattice, values: Vec<ExtReal>) -> Result<Self, GridError> {
        let mask = vec![false; values.len()];
        Self::with_mask(lattice, values, mask)
    }

    /// Every masked node must have at least one unmasked stencil neighbour,
    /// i.e. the mask has empty interior in the lattice topology.
    pub fn with_mask(
        lattice: Lattice,
        values: Vec<ExtReal>,
        mask: Vec<bool>,
    ) -> Result<Self, GridError> {
        let expected = lattice.len();
        if values.len() != expected || mask.len() != expected {
            return Err(GridError::Shape {
                expected,
                got: if values.len() != expected {
                    values.len()
                } else {
                    mask.len()
                },
            });
        }
        for i in 0..expected {
            if mask[i] && lattice.neighbors(i).iter().all(|&j| mask[j]) {
                return Err(GridError::MaskHasInterior(i));
            }
        }
        Ok(GridFn {
            lattice,
            values,
            mask,
        })
    }

    /// Sample a real function; NaN samples are an error.
    pub fn sample(
        lattice: Lattice,
        mask: Vec<bool>,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self, GridError> {
        let values = (0..lattice.len())
            .map(|i| ExtReal::new(f(&lattice.point(i))).ok_or(GridError::NaN(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_mask(lattice, values, mask)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.values
    }

    pub fn value(&self, node: usize) -> ExtReal {
        self.values[node]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_masked(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same lattice and mask, new values.
    pub fn with_values(&self, values: Vec<ExtReal>) -> GridFn {
        assert_eq!(values.len(), self.values.len());
        GridFn {
            lattice: self.lattice.clone(),
            values,
            mask: self.mask.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(ExtReal) -> ExtReal) -> GridFn {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// The smallest open set containing `node`.
    pub fn min_neighborhood(&self, node: usize) -> Vec<usize> {
        let mut u = vec![node];
        if self.mask[node] {
            u.extend(
                self.lattice
                    .neighbors(node)
                    .into_iter()
                    .filter(|&j| !self.mask[j]),
            );
        }
        u
    }

    /// `f ≤ g` at every node.
    pub fn le(&self, other: &GridFn) -> Result<bool, GridError> {
        self.check_same_lattice(other)?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| a <= b))
    }

    pub fn check_same_lattice(&self, other: &GridFn) -> Result<(), GridError> {
        if self.lattice != other.lattice {
            Err(GridError::LatticeMismatch)
        } else {
            Ok(())
        }
    }

    /// Rows `x1,..,xn,value,mask`, header included.
    pub fn to_csv(&self) -> String {
        let n = self.lattice.dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",value,mask\n");
        for i in 0..self.len() {
            for c in self.lattice.point(i) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!(
                "{},{}\n",
                self.values[i],
                u8::from(self.mask[i])
            ));
        }
        out
    }

    /// Inverse of [`GridFn::to_csv`]. Rows must be in row-major lattice order.
    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| GridError::Csv("empty".into()))?;
        let cols = header.split(',').count();
        if cols < 3 {
            return Err(GridError::Csv("need coordinates, value and mask".into()));
        }
        let n = cols - 2;
        let mut coords: Vec<Vec<f64>> = Vec::new();
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(GridError::Csv(format!("row {}: wrong field count", row + 1)));
            }
            let x = fields[..n]
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| GridError::Csv(format!("row {}: bad coordinate", row + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            coords.push(x);
            values.push(fields[n].parse::<ExtReal>()?);
            mask.push(match fields[n + 1].trim() {
                "0" => false,
                "1" => true,
                other => return Err(GridError::Csv(format!("bad mask flag {other:?}"))),
            });
        }
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|d| {
                let mut a: Vec<f64> = coords.iter().map(|x| x[d]).collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            })
            .collect();
        let lattice = Lattice::new(axes)?;
        if lattice.points() != coords {
            return Err(GridError::Csv("rows are not a row-major tensor lattice".into()));
        }
        GridFn::with_mask(lattice, values, mask)
    }
}

fn sweep(f: &GridFn, pick: impl Fn(ExtReal, ExtReal) -> ExtReal) -> GridFn {
    // reads only `f`, writes a fresh buffer
    let values = (0..f.len())
        .map(|i| {
            f.min_neighborhood(i)
                .into_iter()
                .map(|j| f.values[j])
                .reduce(&pick)
                .expect("neighbourhood contains the node")
        })
        .collect();
    f.with_values(values)
}

/// Lower Baire operator `I`.
pub fn lower_baire(f: &GridFn) -> GridFn {
    sweep(f, std::cmp::min)
}

/// Upper Baire operator `S`.
pub fn upper_baire(f: &GridFn) -> GridFn {
    sweep(f, std::cmp::max)
}

/// `I∘S`: the normal lower semicontinuous regularisation.
pub fn normalize_nls(f: &GridFn) -> GridFn {
    lower_baire(&upper_baire(f))
}

/// `S∘I`: the normal upper semicontinuous regularisation.
pub fn normalize_nus(f: &GridFn) -> GridFn {
    upper_baire(&lower_baire(f))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Semicontinuity {
    pub lsc: bool,
    pub usc: bool,
    pub nlsc: bool,
    pub nusc: bool,
}

pub fn semicontinuity_classify(f: &GridFn) -> Semicontinuity {
    Semicontinuity {
        lsc: lower_baire(f).values == f.values,
        usc: upper_baire(f).values == f.values,
        nlsc: normalize_nls(f).values == f.values,
        nusc: normalize_nus(f).values == f.values,
    }
}

/// Lower/upper representatives of an interval-valued function.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopePair {
    pub lower: GridFn,
    pub upper: GridFn,
}

impl EnvelopePair {
    /// Requires `lower ≤ upper` nodewise and finite values off the mask.
    pub fn new(lower: GridFn, upper: GridFn) -> Result<Self, GridError> {
        lower.check_same_lattice(&upper)?;
        let ok = (0..lower.len()).all(|i| {
            lower.values[i] <= upper.values[i]
                && (lower.mask[i]
                    || (lower.values[i].is_finite() && upper.values[i].is_finite()))
        });
        if !ok {
            return Err(GridError::Csv("envelope pair is not ordered and nearly finite".into()));
        }
        Ok(EnvelopePair { lower, upper })
    }

    /// Largest `upper − lower` over unmasked nodes.
    pub fn width(&self) -> f64 {
        (0..self.lower.len())
            .filter(|&i| !self.lower.mask[i])
            .map(|i| ExtReal::gap(self.lower.values[i], self.upper.values[i]))
            .fold(0.0, f64::max)
    }
}

/// Vector-valued samples off `skeleton`, `0` on it, each component
/// regularised with `I∘S`. Nodes on the skeleton become the mask.
pub fn embed_sampled<F>(
    lattice: &Lattice,
    skeleton: &Skeleton,
    k: usize,
    value: F,
) -> Result<Vec<GridFn>, GridError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ApproxError> + Sync,
{
    let rows: Vec<(bool, Vec<f64>)> = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let x = lattice.point(i);
            if skeleton.contains(&x) {
                return Ok((true, vec![0.0; k]));
            }
            match value(&x) {
                Ok(v) if v.len() == k && v.iter().all(|t| !t.is_nan()) => Ok((false, v)),
                Ok(_) => Err(GridError::Sample {
                    x,
                    reason: "wrong arity or NaN".into(),
                }),
                Err(ApproxError::Outside(x)) => Err(GridError::OutsideDomain(x)),
                Err(e) => Err(GridError::Sample {
                    x,
                    reason: e.to_string(),
                }),
            }
        })
        .collect::<Result<_, _>>()?;
    let mask: Vec<bool> = rows.iter().map(|r| r.0).collect();
    (0..k)
        .map(|j| {
            let values = rows.iter().map(|r| ExtReal::finite(r.1[j])).collect();
            GridFn::with_mask(lattice.clone(), values, mask.clone()).map(|g| normalize_nls(&g))
        })
        .collect()
}

/// Component `j` of `u` on the lattice, regularised across its skeleton.
pub fn embed_piecewise(u: &PiecewisePoly, lattice: &Lattice, j: usize) -> Result<GridFn, GridError> {
    let mut out = embed_sampled(lattice, u.skeleton(), 1, |x| Ok(vec![u.value(j, x)?]))?;
    Ok(out.remove(0))
}

/// The embedded images `T_i(x,D)U`, one grid function per component.
pub fn operator_image(
    sys: &PdeSystem,
    u: &PiecewisePoly,
    lattice: &Lattice,
) -> Result<Vec<GridFn>, GridError> {
    embed_sampled(lattice, u.skeleton(), sys.unknowns(), |x| apply_operator(sys, u, x))
}
