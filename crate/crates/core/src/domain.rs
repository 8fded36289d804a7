//! Rectangular domains tiled by cells, uniform subdivision of cells to a
//! diameter bound, and the face skeleton `Γ` left behind by the subdivision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DomainError {
    #[error("degenerate box on axis {axis}: lower {lower} is not below upper {upper}")]
    Degenerate { axis: usize, lower: f64, upper: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cell counts must be at least 1 per axis")]
    ZeroCells,
    #[error("subdivision diameter must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("margin must lie in (0, 0.5), got {0}")]
    BadMargin(f64),
    #[error("at least one sample per cell is required")]
    ZeroSamples,
}

/// A closed n-dimensional interval `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxN {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxN {
    /// Requires `a_i ≤ b_i` on every axis.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (axis, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(DomainError::Degenerate {
                    axis,
                    lower: a,
                    upper: b,
                });
            }
        }
        Ok(BoxN { lower, upper })
    }

    pub fn unit(n: usize) -> Self {
        BoxN {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|d| self.width(d).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d)).product()
    }

    /// Closed containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// `self ∩ [c - r, c + r]^n`, which may be degenerate on some axis.
    pub fn clip_cube(&self, center: &[f64], radius: f64) -> BoxN {
        let lower = center
            .iter()
            .zip(&self.lower)
            .map(|(c, a)| (c - radius).max(*a))
            .collect();
        let upper = center
            .iter()
            .zip(&self.upper)
            .map(|(c, b)| (c + radius).min(*b))
            .collect();
        BoxN { lower, upper }
    }

    /// Tensor grid of `q` points per axis including both endpoints.
    pub fn grid(&self, q: usize) -> Vec<Vec<f64>> {
        let q = q.max(2);
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|d| {
                let (a, b) = (self.lower[d], self.upper[d]);
                (0..q)
                    .map(|i| {
                        if i + 1 == q {
                            b
                        } else {
                            a + (b - a) * (i as f64) / ((q - 1) as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        tensor_points(&axes)
    }
}

/// All points of the tensor product of per-axis coordinate lists, row-major.
pub fn tensor_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// `count + 1` breakpoints splitting `[a, b]` evenly; endpoints are exact.
fn even_breaks(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| {
            if i == 0 {
                a
            } else if i == count {
                b
            } else {
                a + (b - a) * (i as f64) / (count as f64)
            }
        })
        .collect()
}

/// One cell `C_ν` and its uniform split into subcells `I_{ν,j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    bounds: BoxN,
    /// per axis: subcell breakpoints including both cell faces
    splits: Vec<Vec<f64>>,
}

impl Cell {
    pub fn bounds(&self) -> &BoxN {
        &self.bounds
    }

    pub fn splits(&self) -> &[Vec<f64>] {
        &self.splits
    }

    pub fn subcell_counts(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.len() - 1).collect()
    }

    pub fn subcell_count(&self) -> usize {
        self.splits.iter().map(|s| s.len() - 1).product()
    }

    fn subcell(&self, local: usize) -> BoxN {
        let mut rem = local;
        let n = self.splits.len();
        let mut idx = vec![0; n];
        for d in (0..n).rev() {
            let c = self.splits[d].len() - 1;
            idx[d] = rem % c;
            rem /= c;
        }
        BoxN {
            lower: (0..n).map(|d| self.splits[d][idx[d]]).collect(),
            upper: (0..n).map(|d| self.splits[d][idx[d] + 1]).collect(),
        }
    }
}

/// The bounding box `Ω̂` tiled by cells, each split into subcells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPartition {
    bounds: BoxN,
    /// per axis cell breakpoints
    cell_breaks: Vec<Vec<f64>>,
    cells: Vec<Cell>,
    offsets: Vec<usize>,
    delta: Option<f64>,
}

/// Where a point falls relative to a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    /// Strictly inside the subcell with this global index.
    Subcell(usize),
    OnSkeleton,
    Outside,
}

impl CellPartition {
    /// Tile `bounds` with `cells_per_axis[d]` equal cells along axis `d`.
    pub fn build(bounds: &BoxN, cells_per_axis: &[usize]) -> Result<Self, DomainError> {
        let n = bounds.dim();
        if cells_per_axis.len() != n {
            return Err(DomainError::DimensionMismatch {
                expected: n,
                got: cells_per_axis.len(),
            });
        }
        if cells_per_axis.contains(&0) {
            return Err(DomainError::ZeroCells);
        }
        for d in 0..n {
            if bounds.lower[d] >= bounds.upper[d] {
                return Err(DomainError::Degenerate {
                    axis: d,
                    lower: bounds.lower[d],
                    upper: bounds.upper[d],
                });
            }
        }
        let cell_breaks: Vec<Vec<f64>> = (0..n)
            .map(|d| even_breaks(bounds.lower[d], bounds.upper[d], cells_per_axis[d]))
            .collect();
        let index_axes: Vec<Vec<f64>> = cells_per_axis
            .iter()
            .map(|&c| (0..c).map(|i| i as f64).collect())
            .collect();
        let cells = tensor_points(&index_axes)
            .into_iter()
            .map(|idx| {
                let splits: Vec<Vec<f64>> = idx
                    .iter()
                    .enumerate()
                    .map(|(d, &i)| {
                        let i = i as usize;
                        vec![cell_breaks[d][i], cell_breaks[d][i + 1]]
                    })
                    .collect();
                Cell {
                    bounds: BoxN {
                        lower: splits.iter().map(|s| s[0]).collect(),
                        upper: splits.iter().map(|s| s[1]).collect(),
                    },
                    splits,
                }
            })
            .collect();
        Ok(Self::assemble(bounds.clone(), cell_breaks, cells, None))
    }

    fn assemble(
        bounds: BoxN,
        cell_breaks: Vec<Vec<f64>>,
        cells: Vec<Cell>,
        delta: Option<f64>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(cells.len() + 1);
        let mut acc = 0;
        for c in &cells {
            offsets.push(acc);
            acc += c.subcell_count();
        }
        offsets.push(acc);
        CellPartition {
            bounds,
            cell_breaks,
            cells,
            offsets,
            delta,
        }
    }

    /// Re-split every cell so each subcell has Euclidean diameter `≤ delta`.
    ///
    /// A cell already within `delta` stays whole; otherwise axis `d` gets
    /// `⌈w_d·√n / δ⌉` pieces, bumped further if rounding leaves a subcell too
    /// wide.
    pub fn subdivide(&self, delta: f64) -> Result<Self, DomainError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(DomainError::BadDelta(delta));
        }
        let n = self.bounds.dim();
        let root_n = (n as f64).sqrt();
        let cells = self
            .cells
            .iter()
            .map(|cell| {
                let b = &cell.bounds;
                let mut counts: Vec<usize> = if b.diameter() <= delta {
                    vec![1; n]
                } else {
                    (0..n)
                        .map(|d| ((b.width(d) * root_n / delta).ceil() as usize).max(1))
                        .collect()
                };
                let diam = |counts: &[usize]| {
                    (0..n)
                        .map(|d| (b.width(d) / counts[d] as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                while diam(&counts) > delta {
                    let widest = (0..n)
                        .max_by(|&i, &j| {
                            let wi = b.width(i) / counts[i] as f64;
                            let wj = b.width(j) / counts[j] as f64;
                            wi.total_cmp(&wj)
                        })
                        .expect("n >= 1");
                    counts[widest] += 1;
                }
                Cell {
                    bounds: b.clone(),
                    splits: (0..n)
                        .map(|d| even_breaks(b.lower[d], b.upper[d], counts[d]))
                        .collect(),
                }
            })
            .collect();
        Ok(Self::assemble(
            self.bounds.clone(),
            self.cell_breaks.clone(),
            cells,
            Some(delta),
        ))
    }

    pub fn bounds(&self) -> &BoxN {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// The `δ` of the last subdivision, if any.
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn subcell_total(&self) -> usize {
        *self.offsets.last().expect("offsets nonempty")
    }

    /// Subcell by global index (cells in order, row-major inside each cell).
    pub fn subcell(&self, index: usize) -> BoxN {
        let c = self.offsets.partition_point(|&o| o <= index) - 1;
        self.cells[c].subcell(index - self.offsets[c])
    }

    pub fn subcells(&self) -> impl Iterator<Item = BoxN> + '_ {
        (0..self.subcell_total()).map(move |i| self.subcell(i))
    }

    /// All subcell breakpoints along one axis, sorted and deduplicated.
    pub fn axis_breaks(&self, axis: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .cells
            .iter()
            .flat_map(|c| c.splits[axis].iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Find the open subcell containing `x`, or report skeleton/outside.
    pub fn locate(&self, x: &[f64]) -> Location {
        if !self.bounds.contains(x) {
            return Location::Outside;
        }
        let n = self.dim();
        let mut cell_idx = 0;
        for d in 0..n {
            let br = &self.cell_breaks[d];
            match br.binary_search_by(|v| v.partial_cmp(&x[d]).expect("finite")) {
                Ok(_) => return Location::OnSkeleton,
                Err(pos) => {
                    cell_idx = cell_idx * (br.len() - 1) + (pos - 1);
                }
            }
        }
        let cell = &self.cells[cell_idx];
        let mut local = 0;
        for d in 0..n {
            let sp = &cell.splits[d];
            match sp.binary_search_by(|v| v.partial_cmp(&x[d]).expect("finite")) {
                Ok(_) => return Location::OnSkeleton,
                Err(pos) => local = local * (sp.len() - 1) + (pos - 1),
            }
        }
        Location::Subcell(self.offsets[cell_idx] + local)
    }
}

/// A face patch `{x : x_axis = coord} ∩ extent`.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub coord: f64,
    pub extent: BoxN,
}

/// The closed nowhere dense set `Γ`: a finite union of axis-aligned face
/// patches. Membership uses exact coordinate comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    dim: usize,
    faces: Vec<Face>,
    /// per axis: (coord, indices into `faces`), sorted by coord
    by_axis: Vec<Vec<(f64, Vec<usize>)>>,
}

impl Skeleton {
    pub fn from_faces(dim: usize, faces: Vec<Face>) -> Self {
        let mut faces = faces;
        faces.sort_by(|a, b| {
            a.axis
                .cmp(&b.axis)
                .then(a.coord.total_cmp(&b.coord))
                .then_with(|| cmp_slices(a.extent.lower(), b.extent.lower()))
                .then_with(|| cmp_slices(a.extent.upper(), b.extent.upper()))
        });
        faces.dedup();
        let mut by_axis: Vec<Vec<(f64, Vec<usize>)>> = vec![Vec::new(); dim];
        for (i, f) in faces.iter().enumerate() {
            let list = &mut by_axis[f.axis];
            match list.last_mut() {
                Some((c, ids)) if *c == f.coord => ids.push(i),
                _ => list.push((f.coord, vec![i])),
            }
        }
        Skeleton {
            dim,
            faces,
            by_axis,
        }
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Distinct hyperplane coordinates carrying faces on `axis`.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        self.by_axis[axis].iter().map(|(c, _)| *c).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim || x.iter().any(|v| v.is_nan()) {
            return false;
        }
        self.by_axis.iter().enumerate().any(|(d, list)| {
            list.binary_search_by(|(c, _)| c.partial_cmp(&x[d]).expect("not NaN"))
                .map(|pos| {
                    list[pos]
                        .1
                        .iter()
                        .any(|&i| self.faces[i].extent.contains(x))
                })
                .unwrap_or(false)
        })
    }

    /// `Γ₁ ∪ Γ₂`.
    pub fn union(&self, other: &Skeleton) -> Skeleton {
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().cloned());
        Skeleton::from_faces(self.dim, faces)
    }
}

fn cmp_slices(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// All subcell faces of the partition, cell faces included.
pub fn skeleton_of(p: &CellPartition) -> Skeleton {
    let n = p.dim();
    let mut faces = Vec::new();
    for cell in p.cells() {
        for d in 0..n {
            for &c in &cell.splits[d] {
                let mut lower = cell.bounds.lower.clone();
                let mut upper = cell.bounds.upper.clone();
                lower[d] = c;
                upper[d] = c;
                faces.push(Face {
                    axis: d,
                    coord: c,
                    extent: BoxN { lower, upper },
                });
            }
        }
    }
    Skeleton::from_faces(n, faces)
}

/// `per_cell` points per subcell, uniformly drawn from the subcell shrunk by
/// `margin · width` on every side. Subcell `i` draws from ChaCha stream `i`,
/// so the output does not depend on evaluation order.
pub fn sample_points(
    p: &CellPartition,
    per_cell: usize,
    margin: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, DomainError> {
    if per_cell == 0 {
        return Err(DomainError::ZeroSamples);
    }
    if !(margin > 0.0 && margin < 0.5) {
        return Err(DomainError::BadMargin(margin));
    }
    let mut out = Vec::with_capacity(per_cell * p.subcell_total());
    for (i, sc) in p.subcells().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for _ in 0..per_cell {
            let x: Vec<f64> = (0..sc.dim())
                .map(|d| {
                    let w = sc.width(d);
                    let a = sc.lower[d] + margin * w;
                    let b = sc.upper[d] - margin * w;
                    a + (b - a) * rng.gen::<f64>()
                })
                .collect();
            out.push(x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit1() -> BoxN {
        BoxN::new(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn uniform_split_1d() {
        let p = CellPartition::build(&unit1(), &[4]).unwrap();
        let cells: Vec<(f64, f64)> = p
            .cells()
            .iter()
            .map(|c| (c.bounds().lower()[0], c.bounds().upper()[0]))
            .collect();
        assert_eq!(
            cells,
            vec![(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]
        );
    }

    #[test]
    fn tensor_split_2d() {
        let b = BoxN::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let p = CellPartition::build(&b, &[2, 2]).unwrap();
        assert_eq!(p.cells().len(), 4);
        assert_eq!(p.cells()[3].bounds().lower(), &[0.5, 1.0]);
        assert_eq!(p.cells()[3].bounds().upper(), &[1.0, 2.0]);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            BoxN::new(vec![1.0], vec![0.0]),
            Err(DomainError::Degenerate { axis: 0, .. })
        ));
        let flat = BoxN::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(CellPartition::build(&flat, &[1, 1]).is_err());
        assert_eq!(
            CellPartition::build(&unit1(), &[0]),
            Err(DomainError::ZeroCells)
        );
    }

    #[test]
    fn subdivide_examples() {
        let p = CellPartition::build(&unit1(), &[1]).unwrap();
        // ⌈1 / 0.3⌉ = 4
        let s = p.subdivide(0.3).unwrap();
        assert_eq!(s.subcell_total(), 4);
        assert!((s.subcell(0).width(0) - 0.25).abs() < 1e-15);
        assert_eq!(p.subdivide(1.0).unwrap().subcell_total(), 1);
        let sq = CellPartition::build(&BoxN::unit(2), &[1, 1]).unwrap();
        let s = sq.subdivide(1.0).unwrap();
        assert_eq!(s.cells()[0].subcell_counts(), vec![2, 2]);
        assert!(matches!(p.subdivide(0.0), Err(DomainError::BadDelta(_))));
    }

    #[test]
    fn subdivide_is_idempotent() {
        let b = BoxN::new(vec![-1.0, 0.0], vec![2.0, 0.7]).unwrap();
        let p = CellPartition::build(&b, &[3, 2]).unwrap();
        let once = p.subdivide(0.13).unwrap();
        assert_eq!(once.subdivide(0.13).unwrap(), once);
        for sc in once.subcells() {
            assert!(sc.diameter() <= 0.13);
        }
    }

    #[test]
    fn skeleton_1d_is_breakpoints() {
        let p = CellPartition::build(&unit1(), &[4]).unwrap();
        let g = skeleton_of(&p);
        assert_eq!(g.coords(0), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(!g.contains(&[0.3]));
        assert!(g.contains(&[0.75]));
        assert_eq!(p.locate(&[0.3]), Location::Subcell(1));
        assert_eq!(p.locate(&[0.5]), Location::OnSkeleton);
        assert_eq!(p.locate(&[1.5]), Location::Outside);
    }

    #[test]
    fn skeleton_2d_cross() {
        let sq = CellPartition::build(&BoxN::unit(2), &[1, 1]).unwrap();
        let p = sq.subdivide(1.0).unwrap();
        let g = skeleton_of(&p);
        assert_eq!(g.coords(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(g.coords(1), vec![0.0, 0.5, 1.0]);
        assert!(g.contains(&[0.5, 0.3]));
        assert!(g.contains(&[0.9, 0.5]));
        assert!(g.contains(&[0.0, 0.7]));
        assert!(g.contains(&[0.2, 1.0]));
        assert!(!g.contains(&[0.3, 0.3]));
        assert!(!g.contains(&[0.5000001, 0.3]));
    }

    #[test]
    fn samples_respect_margin_and_seed() {
        let p = CellPartition::build(&unit1(), &[1]).unwrap();
        let pts = sample_points(&p, 1, 0.25, 42).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((0.25..=0.75).contains(&pts[0][0]));

        let b = BoxN::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let p = CellPartition::build(&b, &[2, 3]).unwrap().subdivide(0.4).unwrap();
        let g = skeleton_of(&p);
        let a = sample_points(&p, 5, 0.05, 42).unwrap();
        assert_eq!(a, sample_points(&p, 5, 0.05, 42).unwrap());
        assert_ne!(a, sample_points(&p, 5, 0.05, 43).unwrap());
        assert_eq!(a.len(), 5 * p.subcell_total());
        assert!(a.iter().all(|x| !g.contains(x)));
        assert!(matches!(
            sample_points(&p, 1, 0.5, 0),
            Err(DomainError::BadMargin(_))
        ));
    }

    #[test]
    fn volumes_sum_to_bounds() {
        let b = BoxN::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.5]).unwrap();
        let p = CellPartition::build(&b, &[2, 1, 3]).unwrap().subdivide(0.35).unwrap();
        let total: f64 = p.subcells().map(|s| s.volume()).sum();
        assert!((total - b.volume()).abs() <= 1e-12 * b.volume());
    }
}
