//! Instance suite comparing the checkers with the literal oracle.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::brute::{self, antichains};
use super::{
    check_convergence_structure_with, check_initial_compat, check_ucs_with, full,
    induced_convergence, rel, CheckOptions, ConvergenceTable, FiniteFilter, UcsTable,
};

const MAX_MISMATCH_ROWS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelfcheckOptions {
    pub check: CheckOptions,
    /// Run no instances at all.
    pub empty: bool,
    pub seed: u64,
    /// Size of each randomly generated family.
    pub random_instances: usize,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions {
            check: CheckOptions::default(),
            empty: false,
            seed: 7,
            random_instances: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub family: String,
    pub axiom: String,
    pub instances: usize,
    pub agree: usize,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelfcheckReport {
    pub rows: Vec<Row>,
    /// No instance was checked; the pass is vacuous.
    pub insufficient: bool,
}

impl SelfcheckReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

impl fmt::Display for SelfcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:<22} {:>9} {:>9}  verdict", "family", "axiom", "instances", "agree")?;
        for r in &self.rows {
            write!(
                f,
                "{:<28} {:<22} {:>9} {:>9}  {}",
                r.family,
                r.axiom,
                r.instances,
                r.agree,
                if r.pass { "pass" } else { "FAIL" }
            )?;
            if !r.note.is_empty() {
                write!(f, "  {}", r.note)?;
            }
            writeln!(f)?;
        }
        if self.insufficient {
            writeln!(f, "insufficient: no instances were checked")?;
        }
        Ok(())
    }
}

/// Per-axiom agreement tally for one family of instances.
struct Tally {
    family: String,
    labels: Vec<String>,
    instances: usize,
    agree: Vec<usize>,
    mismatches: Vec<Row>,
}

impl Tally {
    fn new(family: impl Into<String>, labels: &[&str]) -> Self {
        Tally {
            family: family.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            instances: 0,
            agree: vec![0; labels.len()],
            mismatches: Vec::new(),
        }
    }

    fn record(&mut self, id: usize, checker: &[bool], oracle: &[bool]) {
        self.instances += 1;
        for (a, (c, o)) in checker.iter().zip(oracle).enumerate() {
            if c == o {
                self.agree[a] += 1;
            } else if self.mismatches.len() < MAX_MISMATCH_ROWS {
                self.mismatches.push(Row {
                    family: format!("{} #{id}", self.family),
                    axiom: self.labels[a].clone(),
                    instances: 1,
                    agree: 0,
                    pass: false,
                    note: format!(
                        "checker says {}, oracle says {}",
                        if *c { "holds" } else { "fails" },
                        if *o { "holds" } else { "fails" }
                    ),
                });
            }
        }
    }

    fn rows(self) -> Vec<Row> {
        let mut rows: Vec<Row> = self
            .labels
            .iter()
            .zip(&self.agree)
            .map(|(l, &a)| Row {
                family: self.family.clone(),
                axiom: l.clone(),
                instances: self.instances,
                agree: a,
                pass: a == self.instances,
                note: String::new(),
            })
            .collect();
        rows.extend(self.mismatches);
        rows
    }
}

fn check_row(family: &str, axiom: &str, results: &[bool]) -> Row {
    let ok = results.iter().filter(|&&b| b).count();
    Row {
        family: family.into(),
        axiom: axiom.into(),
        instances: results.len(),
        agree: ok,
        pass: ok == results.len(),
        note: String::new(),
    }
}

const CONV_LABELS: [&str; 4] = ["(1) [x] converges", "(2) intersections", "(3) finer filters", "Hausdorff"];
const UCS_LABELS: [&str; 5] = [
    "(1) [x]x[x]",
    "(2) intersections",
    "(3) finer filters",
    "(4) inverses",
    "(5) compositions",
];

fn conv_tables(k: usize) -> Vec<ConvergenceTable> {
    let per_point = antichains(k);
    let total = per_point.len().pow(k as u32);
    (0..total)
        .map(|mut code| {
            let gens = (0..k)
                .map(|_| {
                    let a = per_point[code % per_point.len()].clone();
                    code /= per_point.len();
                    a
                })
                .collect();
            ConvergenceTable::new(k, gens).expect("antichains of nonempty subsets")
        })
        .collect()
}

/// Smallest relation containing `seed` and the diagonal that is closed
/// under union, inverse and composition.
pub fn closed_relation(k: usize, seed: u64) -> u64 {
    let mut r = seed | rel::diagonal(k);
    loop {
        let next = r | rel::inverse(k, r) | rel::compose(k, r, r);
        if next == r {
            return r;
        }
        r = next;
    }
}

fn random_relation(rng: &mut ChaCha8Rng, k: usize) -> u64 {
    let p: f64 = rng.gen_range(0.1..0.9);
    (0..k * k).fold(0, |acc, b| if rng.gen_bool(p) { acc | 1 << b } else { acc })
}

/// A random table; about half are closed (valid) ones.
fn random_ucs(rng: &mut ChaCha8Rng, k: usize) -> UcsTable {
    if rng.gen_bool(0.5) {
        let seed = random_relation(rng, k);
        UcsTable::new(k, vec![closed_relation(k, seed)]).expect("nonempty")
    } else {
        let n = rng.gen_range(1..=3);
        let gens: Vec<u64> = (0..n)
            .map(|_| random_relation(rng, k))
            .filter(|&g| g != 0)
            .collect();
        let gens = if gens.is_empty() { vec![rel::diagonal(k)] } else { gens };
        UcsTable::new(k, gens).expect("nonempty")
    }
}

fn valid_ucs(rng: &mut ChaCha8Rng, k: usize) -> UcsTable {
    let seed = random_relation(rng, k);
    UcsTable::new(k, vec![closed_relation(k, seed)]).expect("nonempty")
}

fn relation_laws(filters: &[FiniteFilter]) -> (Vec<bool>, Vec<bool>) {
    let mut inverse_law = Vec::new();
    let mut assoc = Vec::new();
    for u in filters {
        for v in filters {
            if let Ok(uv) = u.compose(v) {
                let rhs = v
                    .inverse()
                    .and_then(|vi| vi.compose(&u.inverse().expect("relation")));
                inverse_law.push(rhs.is_ok_and(|r| r == uv.inverse().expect("relation")));
            }
            for w in filters {
                let left = u.compose(v).and_then(|uv| uv.compose(w));
                let right = v.compose(w).and_then(|vw| u.compose(&vw));
                if let (Ok(l), Ok(r)) = (&left, &right) {
                    assoc.push(l == r);
                } else if left.is_ok() != right.is_ok() {
                    // only one bracketing defined: the set-level composites
                    // differ in emptiness, which associativity forbids
                    assoc.push(false);
                }
            }
        }
    }
    (inverse_law, assoc)
}

/// Run every family and collect one row per (family, axiom), plus a row per
/// disagreeing instance (capped).
pub fn run(opts: &SelfcheckOptions) -> SelfcheckReport {
    if opts.empty {
        return SelfcheckReport {
            rows: Vec::new(),
            insufficient: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::new();
    let mut induced_ok = Vec::new();

    for k in 1..=3 {
        let mut t = Tally::new(format!("convergence |X|={k} all"), &CONV_LABELS);
        for (id, table) in conv_tables(k).iter().enumerate() {
            let r = check_convergence_structure_with(table, opts.check);
            let (axioms, hausdorff) = brute::convergence_axioms(table);
            let checker = [r.axioms.holds(1), r.axioms.holds(2), r.axioms.holds(3), r.hausdorff];
            let oracle = [axioms[0], axioms[1], axioms[2], hausdorff];
            t.record(id, &checker, &oracle);
        }
        rows.extend(t.rows());
    }

    let mut ucs_family = |name: String, tables: Vec<UcsTable>, literal: bool, rows: &mut Vec<Row>| {
        let mut t = Tally::new(name, &UCS_LABELS);
        for (id, table) in tables.iter().enumerate() {
            let r = check_ucs_with(table, opts.check);
            let checker: Vec<bool> = (1..=5).map(|a| r.holds(a)).collect();
            let oracle = if literal {
                brute::ucs_axioms(table)
            } else {
                brute::ucs_axioms_by_members(table)
            };
            t.record(id, &checker, &oracle);
            if r.pass() {
                let conv = check_convergence_structure_with(&induced_convergence(table), opts.check);
                induced_ok.push(conv.axioms.pass());
            }
        }
        rows.extend(t.rows());
    };
    for k in 1..=2 {
        let tables = antichains(k * k)
            .into_iter()
            .map(|g| UcsTable::new(k, g).expect("nonempty subsets"))
            .collect();
        ucs_family(format!("ucs |X|={k} all"), tables, true, &mut rows);
    }
    let random: Vec<UcsTable> = (0..opts.random_instances)
        .map(|_| random_ucs(&mut rng, 3))
        .collect();
    ucs_family("ucs |X|=3 random".into(), random, false, &mut rows);
    rows.push(check_row("induced from passing ucs", "is a convergence str.", &induced_ok));

    let compat: Vec<bool> = (0..opts.random_instances)
        .map(|_| {
            let side = rng.gen_range(1..=3);
            let factors = rng.gen_range(1..=2);
            let mut maps = Vec::new();
            let mut tables = Vec::new();
            for _ in 0..factors {
                let k = rng.gen_range(1..=3);
                maps.push((0..side).map(|_| rng.gen_range(0..k)).collect::<Vec<usize>>());
                tables.push(valid_ucs(&mut rng, k));
            }
            check_initial_compat(side, &maps, &tables).unwrap_or(false)
        })
        .collect();
    rows.push(check_row("initial structures", "compatibility", &compat));

    let two: Vec<FiniteFilter> = (1..=full(4))
        .map(|c| FiniteFilter::from_core(4, c).expect("valid core"))
        .collect();
    let (inv, assoc) = relation_laws(&two);
    rows.push(check_row("relations |X|=2 all", "(UV)^-1 = V^-1 U^-1", &inv));
    rows.push(check_row("relations |X|=2 all", "associativity", &assoc));
    let literal: Vec<bool> = two
        .iter()
        .flat_map(|u| two.iter().map(move |v| (u, v)))
        .map(|(u, v)| {
            let fam = |f: &FiniteFilter| brute::Family::upward(4, &[f.core() as usize]);
            let ours = u.compose(v).ok().map(|c| fam(&c));
            ours == brute::compose(&fam(u), &fam(v))
        })
        .collect();
    rows.push(check_row("relations |X|=2 all", "composition = literal", &literal));
    let three: Vec<FiniteFilter> = (0..opts.random_instances.min(60))
        .map(|_| loop {
            let c = random_relation(&mut rng, 3);
            if c != 0 {
                break FiniteFilter::from_core(9, c).expect("valid core");
            }
        })
        .collect();
    let (inv, assoc) = relation_laws(&three);
    rows.push(check_row("relations |X|=3 random", "(UV)^-1 = V^-1 U^-1", &inv));
    rows.push(check_row("relations |X|=3 random", "associativity", &assoc));

    SelfcheckReport {
        rows,
        insufficient: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_is_an_equivalence() {
        let r = closed_relation(3, rel::pair(3, 0, 1) | rel::pair(3, 1, 2));
        assert_eq!(r, full(9));
        assert!(check_ucs_with(&UcsTable::new(3, vec![r]).unwrap(), CheckOptions::default()).pass());
    }

    #[test]
    fn empty_override_is_vacuous() {
        let r = run(&SelfcheckOptions {
            empty: true,
            ..SelfcheckOptions::default()
        });
        assert!(r.pass() && r.insufficient);
    }

    #[test]
    fn stock_suite_passes() {
        let r = run(&SelfcheckOptions::default());
        assert!(r.pass(), "{r}");
        assert!(!r.insufficient);
        let conv3 = r
            .rows
            .iter()
            .find(|row| row.family == "convergence |X|=3 all")
            .unwrap();
        assert_eq!(conv3.instances, 6859);
    }

    #[test]
    fn dropping_axiom_four_is_caught() {
        let r = run(&SelfcheckOptions {
            check: CheckOptions { skip_axiom: Some(4) },
            ..SelfcheckOptions::default()
        });
        assert!(!r.pass());
        assert!(r.failures().all(|row| row.axiom.starts_with("(4)")));
        assert!(r.failures().count() > 1);
    }
}
