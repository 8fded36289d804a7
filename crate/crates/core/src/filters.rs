//! Filters, convergence structures and uniform convergence structures on
//! finite ground sets.
//!
//! On a finite set every filter is principal: the intersection of a directed
//! base is itself a base member's subset, so a filter is fully described by
//! its nonempty core `C` and equals `{S : S ⊇ C}`. Sets are `u64` bitmasks;
//! a relation on a `k`-point set is a subset of the `k²`-point ground with
//! pair `(i, j)` at bit `i·k + j`.
//!
//! A convergence structure `λ` (resp. uniform convergence structure `J`) is
//! closed under finer filters, so it is determined by the maximal cores of
//! its members. Tables store exactly those, which makes the upward-closure
//! axiom hold by representation.

use std::fmt;

use thiserror::Error;

pub mod brute;
pub mod selfcheck;

/// Largest ground set for plain filters.
pub const MAX_GROUND: usize = 6;
/// Largest ground set whose relations are handled (`4² = 16` pairs).
pub const MAX_RELATION_GROUND: usize = 4;
/// Largest ground of a product filter.
pub const MAX_PRODUCT_GROUND: usize = MAX_GROUND * MAX_GROUND;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("ground set of size {0} is too large or empty")]
    GroundSize(usize),
    #[error("relation ground of size {0} is outside 1..={MAX_RELATION_GROUND}")]
    RelationGround(usize),
    #[error("filter base is empty")]
    EmptyBase,
    #[error("filter base contains the empty set")]
    EmptySet,
    #[error("set {0:#b} is not contained in the ground set")]
    OutOfGround(u64),
    #[error("base is not directed: no member inside {0:#b} ∩ {1:#b}")]
    NotDirected(u64, u64),
    #[error("ground sets differ ({0} vs {1})")]
    GroundMismatch(usize, usize),
    #[error("map has {got} entries for a {expected}-point domain or leaves the codomain")]
    BadMap { expected: usize, got: usize },
    /// Composition or application produced an empty set.
    #[error("undefined composition: the result would contain the empty set")]
    UndefinedComposition,
}

pub fn full(ground: usize) -> u64 {
    if ground >= 64 {
        u64::MAX
    } else {
        (1u64 << ground) - 1
    }
}

fn check_ground(ground: usize) -> Result<(), FilterError> {
    if (1..=MAX_PRODUCT_GROUND).contains(&ground) {
        Ok(())
    } else {
        Err(FilterError::GroundSize(ground))
    }
}

fn check_rel_ground(k: usize) -> Result<(), FilterError> {
    if (1..=MAX_RELATION_GROUND).contains(&k) {
        Ok(())
    } else {
        Err(FilterError::RelationGround(k))
    }
}

fn check_map(map: &[usize], domain: usize, codomain: usize) -> Result<(), FilterError> {
    if map.len() != domain || map.iter().any(|&y| y >= codomain) {
        Err(FilterError::BadMap {
            expected: domain,
            got: map.len(),
        })
    } else {
        Ok(())
    }
}

fn bits(set: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| set >> i & 1 == 1)
}

/// Set-level relation algebra on `k`-point sets.
pub mod rel {
    use super::bits;

    pub fn pair(k: usize, x: usize, y: usize) -> u64 {
        1u64 << (x * k + y)
    }

    pub fn diagonal(k: usize) -> u64 {
        (0..k).fold(0, |acc, x| acc | pair(k, x, x))
    }

    pub fn inverse(k: usize, r: u64) -> u64 {
        bits(r).fold(0, |acc, p| acc | pair(k, p % k, p / k))
    }

    /// `U∘V = {(x, y) : ∃z, (x, z) ∈ V and (z, y) ∈ U}`.
    pub fn compose(k: usize, u: u64, v: u64) -> u64 {
        let mut out = 0;
        for p in bits(v) {
            let (x, z) = (p / k, p % k);
            let row = (u >> (z * k)) & super::full(k);
            out |= row << (x * k);
        }
        out
    }

    /// `U[S] = {x : ∃y ∈ S, (y, x) ∈ U}`.
    pub fn apply(k: usize, u: u64, s: u64) -> u64 {
        bits(s).fold(0, |acc, y| acc | ((u >> (y * k)) & super::full(k)))
    }

    /// `A × B` for `A ⊆ X`, `B ⊆ Y`, `|Y| = kb`.
    pub fn product(kb: usize, a: u64, b: u64) -> u64 {
        bits(a).fold(0, |acc, x| acc | (b << (x * kb)))
    }

    /// `(f × g)(R)` for `R ⊆ X × X'` with `|X'| = kx`, into `Y × Y'`, `|Y'| = ky`.
    pub fn image(kx: usize, ky: usize, f: &[usize], g: &[usize], r: u64) -> u64 {
        bits(r).fold(0, |acc, p| acc | (1u64 << (f[p / kx] * ky + g[p % kx])))
    }

    /// `(f × g)⁻¹(R)`.
    pub fn preimage(kx: usize, ky: usize, f: &[usize], g: &[usize], r: u64) -> u64 {
        let mut out = 0;
        for x in 0..f.len() {
            for y in 0..g.len() {
                if r >> (f[x] * ky + g[y]) & 1 == 1 {
                    out |= 1u64 << (x * kx + y);
                }
            }
        }
        out
    }

    pub fn set_image(f: &[usize], s: u64) -> u64 {
        bits(s).fold(0, |acc, x| acc | (1u64 << f[x]))
    }

    pub fn set_preimage(f: &[usize], s: u64) -> u64 {
        (0..f.len()).fold(0, |acc, x| if s >> f[x] & 1 == 1 { acc | (1 << x) } else { acc })
    }
}

/// A filter on `{0, .., ground − 1}`, stored as its core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteFilter {
    ground: usize,
    core: u64,
}

impl FiniteFilter {
    /// `{S : S ⊇ core}`.
    pub fn from_core(ground: usize, core: u64) -> Result<Self, FilterError> {
        check_ground(ground)?;
        if core == 0 {
            return Err(FilterError::EmptySet);
        }
        if core & !full(ground) != 0 {
            return Err(FilterError::OutOfGround(core));
        }
        Ok(FiniteFilter { ground, core })
    }

    /// `[x]`.
    pub fn principal(ground: usize, x: usize) -> Result<Self, FilterError> {
        if x >= ground {
            return Err(FilterError::OutOfGround(1u64 << x.min(63)));
        }
        Self::from_core(ground, 1 << x)
    }

    /// The filter generated by a directed base.
    pub fn from_base(ground: usize, base: &[u64]) -> Result<Self, FilterError> {
        check_ground(ground)?;
        if base.is_empty() {
            return Err(FilterError::EmptyBase);
        }
        for &b in base {
            if b == 0 {
                return Err(FilterError::EmptySet);
            }
            if b & !full(ground) != 0 {
                return Err(FilterError::OutOfGround(b));
            }
        }
        for &a in base {
            for &b in base {
                if !base.iter().any(|&c| c & !(a & b) == 0) {
                    return Err(FilterError::NotDirected(a, b));
                }
            }
        }
        Self::from_core(ground, base.iter().fold(full(ground), |acc, &b| acc & b))
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn core(&self) -> u64 {
        self.core
    }

    /// Canonical base: the single minimal member.
    pub fn base(&self) -> Vec<u64> {
        vec![self.core]
    }

    pub fn contains(&self, set: u64) -> bool {
        set & !full(self.ground) == 0 && self.core & !set == 0
    }

    /// `self ⊇ other` as families of sets.
    pub fn is_superset_of(&self, other: &FiniteFilter) -> bool {
        self.ground == other.ground && self.core & !other.core == 0
    }

    /// Every member set.
    pub fn members(&self) -> Vec<u64> {
        let free = full(self.ground) & !self.core;
        let mut out = Vec::new();
        let mut sub = free;
        loop {
            out.push(self.core | sub);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        out.sort_unstable();
        out
    }

    /// `f(F)`, generated by `{f(S) : S ∈ F}`.
    pub fn image(&self, map: &[usize], codomain: usize) -> Result<FiniteFilter, FilterError> {
        check_map(map, self.ground, codomain)?;
        Self::from_core(codomain, rel::set_image(map, self.core))
    }

    /// `F × G` on the product ground, pair `(x, y)` at `x·|G| + y`.
    pub fn product(&self, other: &FiniteFilter) -> Result<FiniteFilter, FilterError> {
        Self::from_core(
            self.ground * other.ground,
            rel::product(other.ground, self.core, other.core),
        )
    }

    /// `F ∩ G` as families.
    pub fn intersection(&self, other: &FiniteFilter) -> Result<FiniteFilter, FilterError> {
        if self.ground != other.ground {
            return Err(FilterError::GroundMismatch(self.ground, other.ground));
        }
        Ok(FiniteFilter {
            ground: self.ground,
            core: self.core | other.core,
        })
    }

    /// `k` with `ground = k²`.
    pub fn relation_side(&self) -> Result<usize, FilterError> {
        (1..=MAX_RELATION_GROUND)
            .find(|k| k * k == self.ground)
            .ok_or(FilterError::RelationGround(self.ground))
    }

    pub fn inverse(&self) -> Result<FiniteFilter, FilterError> {
        let k = self.relation_side()?;
        Ok(FiniteFilter {
            ground: self.ground,
            core: rel::inverse(k, self.core),
        })
    }

    /// `U∘V`, defined when every `A∘B` (`A ∈ U`, `B ∈ V`) is nonempty.
    pub fn compose(&self, v: &FiniteFilter) -> Result<FiniteFilter, FilterError> {
        let k = self.relation_side()?;
        if v.ground != self.ground {
            return Err(FilterError::GroundMismatch(self.ground, v.ground));
        }
        match rel::compose(k, self.core, v.core) {
            0 => Err(FilterError::UndefinedComposition),
            c => Ok(FiniteFilter {
                ground: self.ground,
                core: c,
            }),
        }
    }

    /// `U[F]`, generated by `{A[S] : A ∈ U, S ∈ F}`.
    pub fn apply(&self, f: &FiniteFilter) -> Result<FiniteFilter, FilterError> {
        let k = self.relation_side()?;
        if f.ground != k {
            return Err(FilterError::GroundMismatch(k, f.ground));
        }
        match rel::apply(k, self.core, f.core) {
            0 => Err(FilterError::UndefinedComposition),
            c => Ok(FiniteFilter { ground: k, core: c }),
        }
    }

    /// `U[x] = U[[x]]`.
    pub fn apply_point(&self, x: usize) -> Result<FiniteFilter, FilterError> {
        let k = self.relation_side()?;
        self.apply(&FiniteFilter::principal(k, x)?)
    }
}

impl fmt::Display for FiniteFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{{")?;
        for (i, b) in bits(self.core).enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}]")
    }
}

/// Maximal elements of a family of nonempty sets, sorted.
fn maximal(mut sets: Vec<u64>) -> Vec<u64> {
    sets.sort_unstable();
    sets.dedup();
    let keep: Vec<u64> = sets
        .iter()
        .copied()
        .filter(|&s| !sets.iter().any(|&t| t != s && s & !t == 0))
        .collect();
    keep
}

fn validate_gens(ground: usize, gens: &[u64]) -> Result<(), FilterError> {
    for &g in gens {
        if g == 0 {
            return Err(FilterError::EmptySet);
        }
        if g & !full(ground) != 0 {
            return Err(FilterError::OutOfGround(g));
        }
    }
    Ok(())
}

/// `λ : X → P(Φ(X))`, stored per point as the maximal cores of `λ(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConvergenceTable {
    ground: usize,
    gens: Vec<Vec<u64>>,
}

impl ConvergenceTable {
    /// `gens[x]` generates `λ(x)`: `F ∈ λ(x)` iff the core of `F` lies in
    /// one of them. Non-maximal entries are dropped.
    pub fn new(ground: usize, gens: Vec<Vec<u64>>) -> Result<Self, FilterError> {
        if !(1..=MAX_GROUND).contains(&ground) {
            return Err(FilterError::GroundSize(ground));
        }
        if gens.len() != ground {
            return Err(FilterError::BadMap {
                expected: ground,
                got: gens.len(),
            });
        }
        for g in &gens {
            validate_gens(ground, g)?;
        }
        Ok(ConvergenceTable {
            ground,
            gens: gens.into_iter().map(maximal).collect(),
        })
    }

    /// `λ(x) = {[x]}`.
    pub fn discrete(ground: usize) -> Result<Self, FilterError> {
        Self::new(ground, (0..ground).map(|x| vec![1u64 << x]).collect())
    }

    /// Every filter converges to every point.
    pub fn indiscrete(ground: usize) -> Result<Self, FilterError> {
        Self::new(ground, vec![vec![full(ground)]; ground])
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn generators(&self, x: usize) -> &[u64] {
        &self.gens[x]
    }

    pub fn converges(&self, f: &FiniteFilter, x: usize) -> bool {
        f.ground == self.ground && self.gens[x].iter().any(|&g| f.core & !g == 0)
    }
}

/// `J ⊆ Φ(X × X)`, stored as the maximal cores of its members.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UcsTable {
    side: usize,
    gens: Vec<u64>,
}

impl UcsTable {
    pub fn new(side: usize, gens: Vec<u64>) -> Result<Self, FilterError> {
        check_rel_ground(side)?;
        validate_gens(side * side, &gens)?;
        Ok(UcsTable {
            side,
            gens: maximal(gens),
        })
    }

    /// Generated by `[Δ]`.
    pub fn discrete(side: usize) -> Result<Self, FilterError> {
        Self::new(side, vec![rel::diagonal(side)])
    }

    /// All filters on `X × X`.
    pub fn indiscrete(side: usize) -> Result<Self, FilterError> {
        Self::new(side, vec![full(side * side)])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn generators(&self) -> &[u64] {
        &self.gens
    }

    pub fn contains(&self, u: &FiniteFilter) -> bool {
        u.ground == self.side * self.side && self.contains_core(u.core)
    }

    fn contains_core(&self, core: u64) -> bool {
        core != 0 && self.gens.iter().any(|&g| core & !g == 0)
    }
}

/// What a failed axiom points at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Point(usize),
    Filter(FiniteFilter),
    Pair(FiniteFilter, FiniteFilter),
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Point(x) => write!(f, "point {x}"),
            Witness::Filter(u) => write!(f, "filter {u}"),
            Witness::Pair(u, v) => write!(f, "filters {u}, {v}"),
        }
    }
}

/// Per-axiom outcome. Upward closure holds by representation and is
/// reported as passing `by_construction`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxiomReport {
    /// `(axiom number, holds, witness when it fails)`
    pub results: Vec<(u8, bool, Option<Witness>)>,
    pub by_construction: u8,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.1)
    }

    pub fn holds(&self, axiom: u8) -> bool {
        self.results
            .iter()
            .find(|r| r.0 == axiom)
            .is_none_or(|r| r.1)
    }

    pub fn first_violation(&self) -> Option<(u8, &Witness)> {
        self.results
            .iter()
            .find(|r| !r.1)
            .map(|r| (r.0, r.2.as_ref().expect("failures carry a witness")))
    }
}

/// Checker switches, used to fault-inject the self-check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Treat this axiom as always holding.
    pub skip_axiom: Option<u8>,
}

fn outcome(axiom: u8, opts: CheckOptions, w: Option<Witness>) -> (u8, bool, Option<Witness>) {
    if opts.skip_axiom == Some(axiom) {
        (axiom, true, None)
    } else {
        (axiom, w.is_none(), w)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergenceReport {
    pub axioms: AxiomReport,
    pub hausdorff: bool,
}

pub fn check_convergence_structure(t: &ConvergenceTable) -> ConvergenceReport {
    check_convergence_structure_with(t, CheckOptions::default())
}

pub fn check_convergence_structure_with(t: &ConvergenceTable, opts: CheckOptions) -> ConvergenceReport {
    let k = t.ground;
    let filt = |c| FiniteFilter { ground: k, core: c };
    let a1 = (0..k)
        .find(|&x| !t.gens[x].iter().any(|&g| g >> x & 1 == 1))
        .map(Witness::Point);
    let a2 = (0..k).find_map(|x| {
        let g = &t.gens[x];
        g.iter().find_map(|&a| {
            g.iter()
                .find(|&&b| !g.iter().any(|&c| (a | b) & !c == 0))
                .map(|&b| Witness::Pair(filt(a), filt(b)))
        })
    });
    let hausdorff = (0..k).all(|x| {
        (x + 1..k).all(|y| {
            t.gens[x]
                .iter()
                .all(|&a| t.gens[y].iter().all(|&b| a & b == 0))
        })
    });
    ConvergenceReport {
        axioms: AxiomReport {
            results: vec![outcome(1, opts, a1), outcome(2, opts, a2), (3, true, None)],
            by_construction: 3,
        },
        hausdorff,
    }
}

pub fn check_ucs(t: &UcsTable) -> AxiomReport {
    check_ucs_with(t, CheckOptions::default())
}

pub fn check_ucs_with(t: &UcsTable, opts: CheckOptions) -> AxiomReport {
    let k = t.side;
    let filt = |c| FiniteFilter {
        ground: k * k,
        core: c,
    };
    let a1 = (0..k)
        .find(|&x| !t.contains_core(rel::pair(k, x, x)))
        .map(Witness::Point);
    let pairs = || {
        t.gens
            .iter()
            .flat_map(|&a| t.gens.iter().map(move |&b| (a, b)))
    };
    let a2 = pairs()
        .find(|&(a, b)| !t.contains_core(a | b))
        .map(|(a, b)| Witness::Pair(filt(a), filt(b)));
    let a4 = t
        .gens
        .iter()
        .find(|&&a| !t.contains_core(rel::inverse(k, a)))
        .map(|&a| Witness::Filter(filt(a)));
    let a5 = pairs()
        .find(|&(a, b)| {
            let c = rel::compose(k, a, b);
            c != 0 && !t.contains_core(c)
        })
        .map(|(a, b)| Witness::Pair(filt(a), filt(b)));
    AxiomReport {
        results: vec![
            outcome(1, opts, a1),
            outcome(2, opts, a2),
            (3, true, None),
            outcome(4, opts, a4),
            outcome(5, opts, a5),
        ],
        by_construction: 3,
    }
}

/// `F ∈ λ_J(x)` iff `[x] × F ∈ J`.
pub fn induced_convergence(j: &UcsTable) -> ConvergenceTable {
    let k = j.side;
    let gens = (0..k)
        .map(|x| {
            maximal(
                j.gens
                    .iter()
                    .map(|&g| (g >> (x * k)) & full(k))
                    .filter(|&s| s != 0)
                    .collect(),
            )
        })
        .collect();
    ConvergenceTable { ground: k, gens }
}

/// Maximal nonempty sets among `∩_i pre_i(g_i)` over all generator choices.
fn initial_gens(ground_full: u64, per_factor: Vec<Vec<u64>>) -> Vec<u64> {
    let mut acc = vec![ground_full];
    for options in per_factor {
        acc = acc
            .iter()
            .flat_map(|&a| options.iter().map(move |&o| a & o))
            .filter(|&s| s != 0)
            .collect();
        acc = maximal(acc);
    }
    acc
}

/// `U ∈ J` iff `(f_i × f_i)(U) ∈ J_i` for every `i`.
pub fn initial_ucs(side: usize, maps: &[Vec<usize>], structures: &[UcsTable]) -> Result<UcsTable, FilterError> {
    check_rel_ground(side)?;
    if maps.len() != structures.len() {
        return Err(FilterError::BadMap {
            expected: structures.len(),
            got: maps.len(),
        });
    }
    let mut per_factor = Vec::new();
    for (f, t) in maps.iter().zip(structures) {
        check_map(f, side, t.side)?;
        per_factor.push(
            t.gens
                .iter()
                .map(|&g| rel::preimage(side, t.side, f, f, g))
                .collect(),
        );
    }
    UcsTable::new(side, initial_gens(full(side * side), per_factor))
}

/// `F ∈ λ(x)` iff `f_i(F) ∈ λ_i(f_i(x))` for every `i`.
pub fn initial_convergence(
    ground: usize,
    maps: &[Vec<usize>],
    structures: &[ConvergenceTable],
) -> Result<ConvergenceTable, FilterError> {
    if maps.len() != structures.len() {
        return Err(FilterError::BadMap {
            expected: structures.len(),
            got: maps.len(),
        });
    }
    for (f, t) in maps.iter().zip(structures) {
        check_map(f, ground, t.ground)?;
    }
    let gens = (0..ground)
        .map(|x| {
            let per_factor = maps
                .iter()
                .zip(structures)
                .map(|(f, t)| {
                    t.gens[f[x]]
                        .iter()
                        .map(|&g| rel::set_preimage(f, g))
                        .collect()
                })
                .collect();
            initial_gens(full(ground), per_factor)
        })
        .collect();
    ConvergenceTable::new(ground, gens)
}

/// Whether the convergence structure induced by the initial UCS equals the
/// initial convergence structure of the induced ones.
pub fn check_initial_compat(
    side: usize,
    maps: &[Vec<usize>],
    structures: &[UcsTable],
) -> Result<bool, FilterError> {
    let left = induced_convergence(&initial_ucs(side, maps, structures)?);
    let induced: Vec<ConvergenceTable> = structures.iter().map(induced_convergence).collect();
    let right = initial_convergence(side, maps, &induced)?;
    Ok(left == right)
}

/// `F × F ∈ J`.
pub fn is_cauchy(f: &FiniteFilter, j: &UcsTable) -> Result<bool, FilterError> {
    if f.ground != j.side {
        return Err(FilterError::GroundMismatch(f.ground, j.side));
    }
    Ok(j.contains_core(rel::product(j.side, f.core, f.core)))
}

/// Outcome of [`check_uniform_continuity`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Continuity {
    pub continuous: bool,
    /// A member of `J_X` whose image is not in `J_Y`.
    pub witness: Option<FiniteFilter>,
}

/// `(f × f)(U) ∈ J_Y` for every `U ∈ J_X`; checking the generators suffices.
pub fn check_uniform_continuity(
    map: &[usize],
    tx: &UcsTable,
    ty: &UcsTable,
) -> Result<Continuity, FilterError> {
    check_map(map, tx.side, ty.side)?;
    let witness = tx
        .gens
        .iter()
        .find(|&&g| !ty.contains_core(rel::image(tx.side, ty.side, map, map, g)))
        .map(|&g| FiniteFilter {
            ground: tx.side * tx.side,
            core: g,
        });
    Ok(Continuity {
        continuous: witness.is_none(),
        witness,
    })
}
