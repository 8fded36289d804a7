//! Comparison modulo closed nowhere dense sets, order convergence, and the
//! refinement driver that turns one-sided approximations into a monotone
//! Cauchy sequence of operator images.

use thiserror::Error;

use crate::approx::{global_approx, ApproxError, ApproxOptions, Band, PiecewisePoly, ResidualCertificate, Rhs};
use crate::baire::{
    normalize_nls, normalize_nus, operator_image, EnvelopePair, ExtReal, GridError, GridFn, Lattice,
};
use crate::domain::{BoxN, CellPartition, Skeleton};
use crate::expr::PdeSystem;

#[derive(Debug, Error)]
pub enum OrderError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("refinement needs at least one step")]
    NoSteps,
    #[error("step {0} is not in the trace")]
    Step(usize),
    #[error("interval {0} has lower bound above upper bound off the mask")]
    Unordered(usize),
}

fn comparable(f: &GridFn, g: &GridFn, i: usize) -> bool {
    !f.is_masked(i) && !g.is_masked(i)
}

/// `f ≤ g` at every node off `gamma` and off both masks.
pub fn le_mod_nd(f: &GridFn, g: &GridFn, gamma: &Skeleton) -> Result<bool, GridError> {
    f.check_same_lattice(g)?;
    let lat = f.lattice();
    Ok((0..f.len()).all(|i| {
        !comparable(f, g, i) || gamma.contains(&lat.point(i)) || f.value(i) <= g.value(i)
    }))
}

/// `U ≤_T V`: the embedded images satisfy `TU ≤ TV` componentwise off both
/// skeletons.
pub fn pullback_le(
    sys: &PdeSystem,
    u: &PiecewisePoly,
    v: &PiecewisePoly,
    lattice: &Lattice,
) -> Result<bool, GridError> {
    let tu = operator_image(sys, u, lattice)?;
    let tv = operator_image(sys, v, lattice)?;
    let gamma = u.skeleton().union(v.skeleton());
    for (a, b) in tu.iter().zip(&tv) {
        if !le_mod_nd(a, b, &gamma)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Witness pairs `(λ_n, μ_n)` with `λ_n ≤ μ_n` off the masks.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderIntervalSeq {
    pairs: Vec<(GridFn, GridFn)>,
}

impl OrderIntervalSeq {
    pub fn new(pairs: Vec<(GridFn, GridFn)>) -> Result<Self, OrderError> {
        for (n, (l, m)) in pairs.iter().enumerate() {
            l.check_same_lattice(m)?;
            if !le_mod_nd(l, m, &Skeleton::from_faces(l.lattice().dim(), vec![]))? {
                return Err(OrderError::Unordered(n + 1));
            }
        }
        Ok(OrderIntervalSeq { pairs })
    }

    /// Like [`OrderIntervalSeq::new`] but keeps emptied intervals, as the
    /// nested-interval check needs to see them.
    pub fn unchecked(pairs: Vec<(GridFn, GridFn)>) -> Self {
        OrderIntervalSeq { pairs }
    }

    pub fn pairs(&self) -> &[(GridFn, GridFn)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn nested(&self) -> bool {
        self.pairs.windows(2).all(|w| {
            let ((l0, m0), (l1, m1)) = (&w[0], &w[1]);
            l0.lattice() == l1.lattice()
                && (0..l0.len()).all(|i| {
                    !comparable(l0, l1, i)
                        || !comparable(m0, m1, i)
                        || (l0.value(i) <= l1.value(i) && m1.value(i) <= m0.value(i))
                })
        })
    }
}

/// The sandwich test on a finite prefix: `λ_n ↑`, `μ_n ↓`,
/// `λ_n ≤ x_n ≤ μ_n`, `λ_N ≤ x ≤ μ_N` and `μ_N − λ_N ≤ tol` off the masks.
pub fn order_converges(xs: &[GridFn], x: &GridFn, witnesses: &OrderIntervalSeq, tol: f64) -> bool {
    if xs.is_empty() || xs.len() != witnesses.len() || !witnesses.nested() {
        return false;
    }
    let sandwiched = |l: &GridFn, v: &GridFn, m: &GridFn| {
        l.lattice() == v.lattice()
            && v.lattice() == m.lattice()
            && (0..v.len()).all(|i| {
                l.is_masked(i)
                    || v.is_masked(i)
                    || m.is_masked(i)
                    || (l.value(i) <= v.value(i) && v.value(i) <= m.value(i))
            })
    };
    if !xs
        .iter()
        .zip(witnesses.pairs())
        .all(|(v, (l, m))| sandwiched(l, v, m))
    {
        return false;
    }
    let (l, m) = witnesses.pairs().last().expect("nonempty");
    sandwiched(l, x, m)
        && (0..l.len())
            .all(|i| !comparable(l, m, i) || ExtReal::gap(l.value(i), m.value(i)) <= tol)
}

/// Nesting of the intervals plus, on each subbox, either a final gap of at
/// most `tol` or an emptied interval (`λ_N > μ_N` at some node).
pub fn nested_interval_valid(seq: &OrderIntervalSeq, subboxes: &[BoxN], tol: f64) -> bool {
    if seq.is_empty() || !seq.nested() {
        return false;
    }
    let (l, m) = seq.pairs().last().expect("nonempty");
    let lat = l.lattice();
    subboxes.iter().all(|b| {
        let nodes: Vec<usize> = (0..l.len())
            .filter(|&i| comparable(l, m, i) && b.contains(&lat.point(i)))
            .collect();
        let emptied = nodes.iter().any(|&i| l.value(i) > m.value(i));
        let narrow = nodes
            .iter()
            .all(|&i| l.value(i) > m.value(i) || ExtReal::gap(l.value(i), m.value(i)) <= tol);
        emptied || narrow
    })
}

/// Band used at refinement step `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `[−1/n, −1/(n+1)]`: pairwise disjoint, so images increase strictly.
    #[default]
    Nested,
    /// `[−1/n, 0]`: each step on its own; images need not increase.
    Plain,
}

impl Schedule {
    pub fn band(self, n: usize) -> Band {
        let n = n as f64;
        let band = match self {
            Schedule::Nested => Band::new(-1.0 / n, -1.0 / (n + 1.0)),
            Schedule::Plain => Band::below(1.0 / n),
        };
        band.expect("step bands are nonempty")
    }
}

#[derive(Clone, Debug)]
pub struct TraceStep {
    pub n: usize,
    pub band: Band,
    pub solution: PiecewisePoly,
    pub certificate: ResidualCertificate,
    /// Embedded `T U_n` per component after the monotone repair.
    pub images: Vec<GridFn>,
    /// Comparable nodes where the raw image fell more than `2η` below the
    /// previous one.
    pub repairs: usize,
}

/// A generalized solution as computable data: the certified steps, their
/// monotone images and the envelope of the last one.
#[derive(Clone, Debug)]
pub struct SolutionTrace {
    pub schedule: Schedule,
    pub eta: f64,
    pub lattice: Lattice,
    /// `f` sampled at every lattice node, per component.
    pub rhs: Vec<GridFn>,
    pub steps: Vec<TraceStep>,
    /// Per component: `I∘S` of the final image and `S∘I` of `f`.
    pub envelope: Vec<EnvelopePair>,
}

pub const TRACE_HEADER: &str = "n,eps,max_residual,min_residual,gap,repairs";

impl SolutionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step `n`, 1-based.
    pub fn step(&self, n: usize) -> Result<&TraceStep, OrderError> {
        n.checked_sub(1)
            .and_then(|i| self.steps.get(i))
            .ok_or(OrderError::Step(n))
    }

    pub fn repairs(&self) -> usize {
        self.steps.iter().map(|s| s.repairs).sum()
    }

    pub fn all_certified(&self) -> bool {
        self.steps.iter().all(|s| s.certificate.pass())
    }

    /// An upper approximant in solution space is not constructed; only the
    /// image side has the upper witness `f`.
    pub fn solution_upper_envelope(&self) -> Option<&[GridFn]> {
        None
    }

    /// Per component, `sup |T̃U_n − f|` over the unmasked nodes of step `n`.
    pub fn gap_to_rhs(&self, n: usize) -> Result<Vec<f64>, OrderError> {
        let step = self.step(n)?;
        Ok(step
            .images
            .iter()
            .zip(&self.rhs)
            .map(|(img, f)| {
                (0..img.len())
                    .filter(|&i| !img.is_masked(i))
                    .map(|i| ExtReal::gap(img.value(i), f.value(i)).abs())
                    .fold(0.0, f64::max)
            })
            .collect())
    }

    /// `λ_n = T̃U_n`, `μ_n = f` for one component.
    pub fn interval_seq(&self, component: usize) -> OrderIntervalSeq {
        OrderIntervalSeq::unchecked(
            self.steps
                .iter()
                .map(|s| {
                    let img = &s.images[component];
                    (img.clone(), img.with_values(self.rhs[component].values().to_vec()))
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for s in &self.steps {
            let gap = if s.n > 1 {
                cauchy_gap(self, s.n - 1, s.n)
                    .expect("consecutive steps exist")
                    .into_iter()
                    .fold(0.0, f64::max)
                    .to_string()
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.n,
                s.band.eps(),
                s.certificate.max_residual(),
                s.certificate.min_residual(),
                gap,
                s.repairs
            ));
        }
        out
    }
}

/// Per component, `sup |T̃U_{n1} − T̃U_{n2}|` over nodes unmasked in both.
pub fn cauchy_gap(trace: &SolutionTrace, n1: usize, n2: usize) -> Result<Vec<f64>, OrderError> {
    let a = trace.step(n1)?;
    let b = trace.step(n2)?;
    Ok(a.images
        .iter()
        .zip(&b.images)
        .map(|(f, g)| {
            (0..f.len())
                .filter(|&i| comparable(f, g, i))
                .map(|i| ExtReal::gap(f.value(i), g.value(i)).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Run `global_approx` for `n = 1..=n_max` with the schedule's bands and
/// collect the embedded images, forced monotone by running maxima.
pub fn refine_solution(
    sys: &PdeSystem,
    rhs: &dyn Rhs,
    p: &CellPartition,
    n_max: usize,
    lattice: &Lattice,
    opts: &ApproxOptions,
    schedule: Schedule,
) -> Result<SolutionTrace, OrderError> {
    if n_max == 0 {
        return Err(OrderError::NoSteps);
    }
    let k = sys.unknowns();
    let f_rows: Vec<Vec<f64>> = lattice
        .points()
        .iter()
        .map(|x| {
            rhs.eval(x).map_err(|err| ApproxError::Rhs {
                x: x.clone(),
                err,
            })
        })
        .collect::<Result<_, _>>()?;
    let rhs_grids = (0..k)
        .map(|j| {
            GridFn::new(
                lattice.clone(),
                f_rows.iter().map(|r| ExtReal::finite(r[j])).collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut steps: Vec<TraceStep> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let band = schedule.band(n);
        let (solution, certificate) = global_approx(sys, rhs, p, band, opts)?;
        let raw = operator_image(sys, &solution, lattice)?;
        let mut repairs = 0;
        let images = match steps.last() {
            None => raw,
            Some(prev) => raw
                .iter()
                .zip(&prev.images)
                .map(|(cur, old)| {
                    let values = (0..cur.len())
                        .map(|i| {
                            let (c, o) = (cur.value(i), old.value(i));
                            if comparable(cur, old, i) && ExtReal::gap(c, o) > 2.0 * opts.eta {
                                repairs += 1;
                            }
                            c.max(o)
                        })
                        .collect();
                    cur.with_values(values)
                })
                .collect(),
        };
        steps.push(TraceStep {
            n,
            band,
            solution,
            certificate,
            images,
            repairs,
        });
    }

    let last = steps.last().expect("n_max >= 1");
    let envelope = last
        .images
        .iter()
        .zip(&rhs_grids)
        .map(|(img, f)| {
            let upper = normalize_nus(&img.with_values(f.values().to_vec()));
            EnvelopePair::new(normalize_nls(img), upper)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SolutionTrace {
        schedule,
        eta: opts.eta,
        lattice: lattice.clone(),
        rhs: rhs_grids,
        steps,
        envelope,
    })
}
