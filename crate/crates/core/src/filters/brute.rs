//! Literal evaluation of the axioms on explicit families of sets.
//!
//! Nothing here uses the core representation: a filter is the set of all its
//! members, operations are computed from their set-level definitions, and
//! every filter on a small ground is found by testing all families. Only
//! usable on grounds of at most 4 points (`2^16` candidate families).

use std::sync::OnceLock;

use super::{ConvergenceTable, UcsTable};

/// A family of subsets of `{0, .., ground − 1}`; subset `s` is a member iff
/// bit `s` is set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Family {
    ground: usize,
    bits: Vec<u64>,
}

impl Family {
    pub fn empty(ground: usize) -> Self {
        let n = 1usize << ground;
        Family {
            ground,
            bits: vec![0; n.div_ceil(64)],
        }
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn has(&self, s: usize) -> bool {
        self.bits[s / 64] >> (s % 64) & 1 == 1
    }

    pub fn insert(&mut self, s: usize) {
        self.bits[s / 64] |= 1 << (s % 64);
    }

    pub fn sets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..1usize << self.ground).filter(|&s| self.has(s))
    }

    /// All sets containing some member of `gens`.
    pub fn upward(ground: usize, gens: &[usize]) -> Self {
        let mut f = Family::empty(ground);
        for s in 0..1usize << ground {
            if gens.iter().any(|&g| s & g == g) {
                f.insert(s);
            }
        }
        f
    }

    /// `{S : x ∈ S}`.
    pub fn point(ground: usize, x: usize) -> Self {
        let mut f = Family::empty(ground);
        for s in 0..1usize << ground {
            if s >> x & 1 == 1 {
                f.insert(s);
            }
        }
        f
    }

    pub fn is_filter(&self) -> bool {
        let all = (1usize << self.ground) - 1;
        if !self.has(all) || self.has(0) {
            return false;
        }
        for a in self.sets() {
            for b in 0..=all {
                if b & a == a && !self.has(b) {
                    return false;
                }
            }
            for b in self.sets() {
                if !self.has(a & b) {
                    return false;
                }
            }
        }
        true
    }

    pub fn contains_family(&self, other: &Family) -> bool {
        other.sets().all(|s| self.has(s))
    }

    pub fn intersect(&self, other: &Family) -> Family {
        Family {
            ground: self.ground,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect(),
        }
    }
}

fn filters_of(ground: usize) -> Vec<Family> {
    let subsets = 1usize << ground;
    (0u64..1u64 << subsets)
        .filter_map(|mask| {
            let mut f = Family::empty(ground);
            for s in 0..subsets {
                if mask >> s & 1 == 1 {
                    f.insert(s);
                }
            }
            f.is_filter().then_some(f)
        })
        .collect()
}

/// Every filter on a ground of at most 4 points.
pub fn all_filters(ground: usize) -> &'static [Family] {
    static CACHE: [OnceLock<Vec<Family>>; 5] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    assert!((1..=4).contains(&ground), "brute force needs 1..=4 points");
    CACHE[ground].get_or_init(|| filters_of(ground))
}

fn has_pair(k: usize, r: usize, x: usize, y: usize) -> bool {
    r >> (x * k + y) & 1 == 1
}

fn rel_inverse(k: usize, r: usize) -> usize {
    let mut out = 0;
    for x in 0..k {
        for y in 0..k {
            if has_pair(k, r, x, y) {
                out |= 1 << (y * k + x);
            }
        }
    }
    out
}

fn rel_compose(k: usize, u: usize, v: usize) -> usize {
    let mut out = 0;
    for x in 0..k {
        for y in 0..k {
            if (0..k).any(|z| has_pair(k, v, x, z) && has_pair(k, u, z, y)) {
                out |= 1 << (x * k + y);
            }
        }
    }
    out
}

fn rel_product(k: usize, a: usize, b: usize) -> usize {
    let mut out = 0;
    for x in 0..k {
        for y in 0..k {
            if a >> x & 1 == 1 && b >> y & 1 == 1 {
                out |= 1 << (x * k + y);
            }
        }
    }
    out
}

fn side_of(f: &Family) -> usize {
    (1..=2).find(|k| k * k == f.ground).expect("relation family on 1 or 4 points")
}

/// `F × G` on `X × X`, generated by `{A × B}`.
pub fn product(f: &Family, g: &Family) -> Family {
    let k = f.ground;
    let gens: Vec<usize> = f
        .sets()
        .flat_map(|a| g.sets().map(move |b| rel_product(k, a, b)))
        .collect();
    Family::upward(k * k, &gens)
}

pub fn inverse(u: &Family) -> Family {
    let k = side_of(u);
    let gens: Vec<usize> = u.sets().map(|a| rel_inverse(k, a)).collect();
    Family::upward(u.ground, &gens)
}

/// `U∘V`, `None` when some `A∘B` is empty.
pub fn compose(u: &Family, v: &Family) -> Option<Family> {
    let k = side_of(u);
    let mut gens = Vec::new();
    for a in u.sets() {
        for b in v.sets() {
            let c = rel_compose(k, a, b);
            if c == 0 {
                return None;
            }
            gens.push(c);
        }
    }
    Some(Family::upward(u.ground, &gens))
}

fn lambda(t: &ConvergenceTable, x: usize) -> Vec<Family> {
    let k = t.ground();
    let gens: Vec<Family> = t
        .generators(x)
        .iter()
        .map(|&g| Family::upward(k, &[g as usize]))
        .collect();
    all_filters(k)
        .iter()
        .filter(|f| gens.iter().any(|g| f.contains_family(g)))
        .cloned()
        .collect()
}

/// `[axiom 1, axiom 2, axiom 3]` and the Hausdorff flag.
pub fn convergence_axioms(t: &ConvergenceTable) -> ([bool; 3], bool) {
    let k = t.ground();
    let lam: Vec<Vec<Family>> = (0..k).map(|x| lambda(t, x)).collect();
    let a1 = (0..k).all(|x| lam[x].contains(&Family::point(k, x)));
    let a2 = lam
        .iter()
        .all(|l| l.iter().all(|f| l.iter().all(|g| l.contains(&f.intersect(g)))));
    let a3 = lam.iter().all(|l| {
        l.iter().all(|f| {
            all_filters(k)
                .iter()
                .all(|h| !h.contains_family(f) || l.contains(h))
        })
    });
    let hausdorff = (0..k).all(|x| (0..k).all(|y| x == y || lam[x].iter().all(|f| !lam[y].contains(f))));
    ([a1, a2, a3], hausdorff)
}

/// `[axiom 1, .., axiom 5]` by literal families; sides 1 and 2 only.
pub fn ucs_axioms(t: &UcsTable) -> [bool; 5] {
    let k = t.side();
    let g = k * k;
    let gens: Vec<Family> = t
        .generators()
        .iter()
        .map(|&c| Family::upward(g, &[c as usize]))
        .collect();
    let j: Vec<Family> = all_filters(g)
        .iter()
        .filter(|f| gens.iter().any(|c| f.contains_family(c)))
        .cloned()
        .collect();
    let a1 = (0..k).all(|x| j.contains(&product(&Family::point(k, x), &Family::point(k, x))));
    let a2 = j.iter().all(|u| j.iter().all(|v| j.contains(&u.intersect(v))));
    let a3 = j.iter().all(|u| {
        all_filters(g)
            .iter()
            .all(|h| !h.contains_family(u) || j.contains(h))
    });
    let a4 = j.iter().all(|u| j.contains(&inverse(u)));
    let a5 = j
        .iter()
        .all(|u| j.iter().all(|v| compose(u, v).is_none_or(|c| j.contains(&c))));
    [a1, a2, a3, a4, a5]
}

/// `[axiom 1, .., axiom 5]` by enumerating every member's core (relations
/// contained in a generator) and applying the axioms to all of them. Used
/// where the literal families are too large.
pub fn ucs_axioms_by_members(t: &UcsTable) -> [bool; 5] {
    let k = t.side();
    let subsets = 1usize << (k * k);
    let mut member = vec![false; subsets];
    for &g in t.generators() {
        let g = g as usize;
        let mut s = g;
        while s != 0 {
            member[s] = true;
            s = (s - 1) & g;
        }
    }
    let members: Vec<usize> = (1..subsets).filter(|&s| member[s]).collect();
    let a1 = (0..k).all(|x| member[1 << (x * k + x)]);
    let a2 = members
        .iter()
        .all(|&a| members.iter().all(|&b| member[a | b]));
    // finer filters have smaller cores
    let a3 = members
        .iter()
        .all(|&a| (0..k * k).all(|p| a & !(1 << p) == 0 || member[a & !(1 << p)]));
    let a4 = members.iter().all(|&a| member[rel_inverse(k, a)]);
    let a5 = members.iter().all(|&a| {
        members.iter().all(|&b| {
            let c = rel_compose(k, a, b);
            c == 0 || member[c]
        })
    });
    [a1, a2, a3, a4, a5]
}

/// All antichains of nonempty subsets of a `ground`-point set, the empty
/// antichain included.
pub fn antichains(ground: usize) -> Vec<Vec<u64>> {
    let sets: Vec<u64> = (1u64..1 << ground).collect();
    let n = sets.len();
    assert!(n <= 20, "too many subsets to enumerate antichains");
    (0u64..1 << n)
        .filter_map(|mask| {
            let chosen: Vec<u64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| sets[i]).collect();
            let anti = chosen
                .iter()
                .all(|&a| chosen.iter().all(|&b| a == b || a & !b != 0));
            anti.then_some(chosen)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_counts() {
        // filters on a finite set ↔ nonempty cores
        assert_eq!(all_filters(1).len(), 1);
        assert_eq!(all_filters(2).len(), 3);
        assert_eq!(all_filters(3).len(), 7);
        assert_eq!(all_filters(4).len(), 15);
    }

    #[test]
    fn antichain_counts() {
        // Dedekind numbers minus the antichain {∅}
        assert_eq!(antichains(2).len(), 5);
        assert_eq!(antichains(3).len(), 19);
        assert_eq!(antichains(4).len(), 167);
    }

    #[test]
    fn literal_discrete_uniformity() {
        assert_eq!(ucs_axioms(&UcsTable::discrete(2).unwrap()), [true; 5]);
        assert_eq!(ucs_axioms_by_members(&UcsTable::discrete(3).unwrap()), [true; 5]);
    }
}
