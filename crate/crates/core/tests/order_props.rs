mod common;

use common::random_piecewise;
use ocm_core::approx::{apply_operator, global_approx, ApproxOptions};
use ocm_core::baire::{GridFn, Lattice};
use ocm_core::domain::{BoxN, CellPartition, Skeleton};
use ocm_core::expr::{parse_system, RhsExprs};
use ocm_core::order::{cauchy_gap, le_mod_nd, refine_solution, OrderIntervalSeq, Schedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ETA: f64 = 1e-9;

fn perturbed(f: &GridFn, seed: u64, up: bool) -> GridFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = f
        .values()
        .iter()
        .map(|&v| {
            let d = rng.gen_range(0.0..1.0);
            let w = v.to_f64() + if up { d } else { -d };
            if v.is_finite() { w.into() } else { v }
        })
        .collect();
    f.with_values(values)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn le_mod_nd_is_a_preorder(seed in any::<u64>()) {
        let f = random_piecewise(&mut ChaCha8Rng::seed_from_u64(seed));
        let none = Skeleton::from_faces(f.lattice().dim(), vec![]);
        let g = perturbed(&f, seed ^ 1, true);
        let h = perturbed(&g, seed ^ 2, true);
        prop_assert!(le_mod_nd(&f, &f, &none).unwrap());
        prop_assert!(le_mod_nd(&f, &g, &none).unwrap());
        prop_assert!(le_mod_nd(&g, &h, &none).unwrap());
        prop_assert!(le_mod_nd(&f, &h, &none).unwrap());
    }
}

struct Problem {
    n: usize,
    k: usize,
    m: u32,
    equations: &'static str,
    rhs: &'static [&'static str],
    steps: usize,
}

const SUITE: &[Problem] = &[
    Problem { n: 1, k: 1, m: 1, equations: "D(u1,(1))", rhs: &["x1"], steps: 20 },
    Problem { n: 1, k: 1, m: 0, equations: "u1", rhs: &["0"], steps: 20 },
    Problem { n: 1, k: 1, m: 2, equations: "D(u1,(2)) + u1", rhs: &["1"], steps: 20 },
    Problem { n: 1, k: 1, m: 1, equations: "D(u1,(1))^2 + u1", rhs: &["1 + x1"], steps: 20 },
    Problem { n: 2, k: 1, m: 1, equations: "D(u1,(1,0))", rhs: &["x1*x2"], steps: 4 },
    Problem { n: 1, k: 2, m: 1, equations: "D(u1,(1)) + u2\nD(u2,(1)) - u1", rhs: &["x1", "1"], steps: 20 },
];

#[test]
fn nested_images_increase_to_rhs() {
    let opts = ApproxOptions { min_samples: 100, ..ApproxOptions::default() };
    for prob in SUITE {
        let sys = parse_system(prob.equations, prob.n, prob.k, prob.m).unwrap();
        let rhs = RhsExprs::parse(prob.rhs, prob.n).unwrap();
        let part = CellPartition::build(&BoxN::unit(prob.n), &vec![1; prob.n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| (0..prob.n).map(|_| rng.gen::<f64>()).collect()).collect();
        let mut prev: Vec<Option<Vec<f64>>> = vec![None; xs.len()];
        for n in 1..=prob.steps {
            let band = Schedule::Nested.band(n);
            let (u, cert) = global_approx(&sys, &rhs, &part, band, &opts).unwrap();
            assert!(cert.pass());
            for (x, last) in xs.iter().zip(prev.iter_mut()) {
                let Ok(t) = apply_operator(&sys, &u, x) else {
                    *last = None;
                    continue;
                };
                let f = rhs.eval(x).unwrap();
                for j in 0..prob.k {
                    assert!((t[j] - f[j]).abs() <= 1.0 / n as f64 + ETA);
                    if let Some(p) = last {
                        assert!(t[j] >= p[j] - 2.0 * ETA, "{}: decrease at {x:?}, step {n}", prob.equations);
                    }
                }
                *last = Some(t);
            }
        }
    }
}

#[test]
fn refinement_trace_laws() {
    let sys = parse_system("D(u1,(1))^2 + u1", 1, 1, 1).unwrap();
    let rhs = RhsExprs::parse(&["1 + x1"], 1).unwrap();
    let part = CellPartition::build(&BoxN::unit(1), &[2]).unwrap();
    let lattice = Lattice::uniform(&BoxN::unit(1), &[101]).unwrap();
    let opts = ApproxOptions { min_samples: 1000, ..ApproxOptions::default() };
    let steps = 12;
    let trace = refine_solution(&sys, &rhs, &part, steps, &lattice, &opts, Schedule::Nested).unwrap();
    assert_eq!(trace.len(), steps);
    assert_eq!(trace.repairs(), 0);
    assert!(trace.all_certified());
    for n in 1..=steps {
        let bound = 1.0 / n as f64 + 2.0 * ETA;
        assert!(trace.gap_to_rhs(n).unwrap()[0] <= bound);
        assert!(cauchy_gap(&trace, n, steps).unwrap()[0] <= bound);
    }
    for w in trace.steps.windows(2) {
        let gamma = w[0].solution.skeleton().union(w[1].solution.skeleton());
        assert!(le_mod_nd(&w[0].images[0], &w[1].images[0], &gamma).unwrap());
    }
    let pairs = trace.interval_seq(0).pairs().to_vec();
    assert!(OrderIntervalSeq::new(pairs).is_ok());
    let env = &trace.envelope[0];
    assert!(env.lower.le(&env.upper).unwrap());
    assert!(env.width() <= 1.0 / steps as f64 + 2.0 * ETA);
}
