use ocm_core::approx::{
    apply_operator, check_residual, global_approx, solve_jet, taylor_poly, ApproxOptions, Band,
    JetPoint, PiecewisePoly, TaylorBasis,
};
use ocm_core::domain::{sample_points, BoxN, CellPartition};
use ocm_core::expr::{parse_system, MultiIndexSet, PdeSystem, RhsExprs};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Five-point central stencils, exact on polynomials of degree ≤ 4.
fn stencil(order: u32, h: f64) -> [f64; 5] {
    match order {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [1.0, -8.0, 0.0, 8.0, -1.0].map(|w| w / (12.0 * h)),
        2 => [-1.0, 16.0, -30.0, 16.0, -1.0].map(|w| w / (12.0 * h * h)),
        3 => [-1.0, 2.0, 0.0, -2.0, 1.0].map(|w| w / (2.0 * h * h * h)),
        _ => unreachable!(),
    }
}

fn finite_difference(p: impl Fn(&[f64]) -> f64, x0: &[f64], alpha: &[u32], h: f64) -> f64 {
    let n = x0.len();
    let mut total = 0.0;
    for code in 0..5usize.pow(n as u32) {
        let mut c = code;
        let mut w = 1.0;
        let mut x = x0.to_vec();
        for d in 0..n {
            let o = c % 5;
            c /= 5;
            w *= stencil(alpha[d], h)[o];
            x[d] += (o as f64 - 2.0) * h;
        }
        if w != 0.0 {
            total += w * p(&x);
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn taylor_poly_reproduces_jet(n in 1usize..=2, m in 0u32..=3, k in 1usize..=2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphas = MultiIndexSet::new(n, m);
        let basis = TaylorBasis::new(alphas.clone());
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let xi: Vec<f64> = (0..k * alphas.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let piece = taylor_poly(&basis, &JetPoint { x0: x0.clone(), xi: xi.clone() });
        for j in 0..k {
            for (a, alpha) in alphas.alphas().iter().enumerate() {
                let fd = finite_difference(|x| piece.value(&basis, j, x), &x0, &alpha.0, 0.1);
                let want = xi[j * alphas.len() + a];
                prop_assert!((fd - want).abs() <= 1e-6 * (1.0 + want.abs()),
                    "component {j} alpha {:?}: {fd} vs {want}", alpha.0);
            }
        }
    }
}

/// `D^α` of `Σ c_β (x − c)^β` by differentiating one monomial at a time.
fn monomial_derivative(coeffs: &[(f64, Vec<u32>)], alpha: &[u32], center: &[f64], x: &[f64]) -> f64 {
    let mut terms: Vec<(f64, Vec<u32>)> = coeffs.to_vec();
    for (d, &times) in alpha.iter().enumerate() {
        for _ in 0..times {
            terms = terms
                .into_iter()
                .filter(|(_, e)| e[d] > 0)
                .map(|(c, mut e)| {
                    let c = c * e[d] as f64;
                    e[d] -= 1;
                    (c, e)
                })
                .collect();
        }
    }
    terms
        .iter()
        .map(|(c, e)| {
            c * e
                .iter()
                .enumerate()
                .map(|(d, &p)| (x[d] - center[d]).powi(p as i32))
                .product::<f64>()
        })
        .sum()
}

#[test]
fn operator_matches_monomial_oracle() {
    let sys = parse_system(
        "D(u1,(1,0))*D(u1,(0,1)) + sin(u1) - x1*D(u1,(2,0)) + D(u1,(1,1))^2 + exp(x2)*D(u2,(0,2))\n\
         u1*u2 - D(u2,(1,0))",
        2,
        2,
        2,
    )
    .unwrap();
    let operator = |x: &[f64], d: &dyn Fn(usize, [u32; 2]) -> f64| {
        [
            d(0, [1, 0]) * d(0, [0, 1]) + d(0, [0, 0]).sin() - x[0] * d(0, [2, 0])
                + d(0, [1, 1]).powi(2)
                + x[1].exp() * d(1, [0, 2]),
            d(0, [0, 0]) * d(1, [0, 0]) - d(1, [1, 0]),
        ]
    };
    let bounds = BoxN::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    let p = CellPartition::build(&bounds, &[4, 5]).unwrap();
    let basis = TaylorBasis::new(sys.alphas().clone());
    let per = sys.alphas().len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pieces: Vec<_> = p
        .subcells()
        .map(|b| {
            let xi = (0..2 * per).map(|_| rng.gen_range(-2.0..2.0)).collect();
            taylor_poly(&basis, &JetPoint { x0: b.center(), xi })
        })
        .collect();
    let u = PiecewisePoly::new(p.clone(), basis, pieces).unwrap();
    let exps: Vec<Vec<u32>> = sys.alphas().alphas().iter().map(|a| a.0.clone()).collect();

    let mut checked = 0;
    while checked < 1000 {
        let i = rng.gen_range(0..p.subcell_total());
        let b = p.subcell(i);
        let x: Vec<f64> = (0..2)
            .map(|d| b.lower()[d] + b.width(d) * rng.gen_range(0.01..0.99))
            .collect();
        let piece = &u.pieces()[i];
        let poly = |j: usize| -> Vec<(f64, Vec<u32>)> {
            exps.iter()
                .enumerate()
                .map(|(a, e)| (piece.coeffs()[j * per + a], e.clone()))
                .collect()
        };
        let polys = [poly(0), poly(1)];
        let d = |j: usize, alpha: [u32; 2]| monomial_derivative(&polys[j], &alpha, piece.center(), &x);
        let want = operator(&x, &d);
        let got = apply_operator(&sys, &u, &x).unwrap();
        for j in 0..2 {
            assert!(
                (got[j] - want[j]).abs() <= 1e-9 * (1.0 + want[j].abs()),
                "at {x:?}: {} vs {}",
                got[j],
                want[j]
            );
        }
        checked += 1;
    }
}

struct Problem {
    name: &'static str,
    n: usize,
    k: usize,
    m: u32,
    equations: &'static str,
    rhs: &'static [&'static str],
    cells: &'static [usize],
}

const SUITE: &[Problem] = &[
    Problem { name: "transport", n: 1, k: 1, m: 1, equations: "D(u1,(1))", rhs: &["x1"], cells: &[1] },
    Problem { name: "algebraic", n: 1, k: 1, m: 0, equations: "u1", rhs: &["0"], cells: &[1] },
    Problem { name: "oscillator", n: 1, k: 1, m: 2, equations: "D(u1,(2)) + u1", rhs: &["1"], cells: &[1] },
    Problem { name: "eikonal", n: 1, k: 1, m: 1, equations: "D(u1,(1))^2 + u1", rhs: &["1 + x1"], cells: &[1] },
    Problem { name: "planar", n: 2, k: 1, m: 1, equations: "D(u1,(1,0))", rhs: &["x1*x2"], cells: &[1, 1] },
    Problem {
        name: "coupled",
        n: 1,
        k: 2,
        m: 1,
        equations: "D(u1,(1)) + u2\nD(u2,(1)) - u1",
        rhs: &["x1", "1"],
        cells: &[1],
    },
];

fn setup(p: &Problem) -> (PdeSystem, RhsExprs, CellPartition) {
    let sys = parse_system(p.equations, p.n, p.k, p.m).unwrap();
    let rhs = RhsExprs::parse(p.rhs, p.n).unwrap();
    let part = CellPartition::build(&BoxN::unit(p.n), p.cells).unwrap();
    (sys, rhs, part)
}

#[test]
fn suite_certifies_and_tightens() {
    for prob in SUITE {
        let (sys, rhs, part) = setup(prob);
        let mut last_pieces = 0;
        for eps in [0.2, 0.1, 0.05] {
            let band = Band::below(eps).unwrap();
            let (u, cert) = global_approx(&sys, &rhs, &part, band, &ApproxOptions::default()).unwrap();
            assert!(cert.pass(), "{} at {eps}: {cert}", prob.name);
            assert!(cert.samples() >= 10_000);
            assert!(cert.max_residual() <= 1e-9 && cert.min_residual() >= -eps - 1e-9);
            assert!(u.len() >= last_pieces, "{}: pieces shrank at {eps}", prob.name);
            last_pieces = u.len();
        }
    }
}

#[test]
fn residual_at_centers_is_band_midpoint() {
    for prob in SUITE {
        let (sys, rhs, part) = setup(prob);
        let band = Band::below(0.1).unwrap();
        let (u, _) = global_approx(&sys, &rhs, &part, band, &ApproxOptions::default()).unwrap();
        for piece in u.pieces() {
            let c = piece.center();
            let r = apply_operator(&sys, &u, c).unwrap();
            let f = rhs.eval(c).unwrap();
            for j in 0..sys.unknowns() {
                assert!((r[j] - f[j] - band.mid()).abs() <= 1e-9, "{} at {c:?}", prob.name);
            }
        }
    }
}

#[test]
fn perturbed_piece_is_reported() {
    let (sys, rhs, part) = setup(&SUITE[0]);
    let eps = 0.1;
    let (mut u, cert) =
        global_approx(&sys, &rhs, &part, Band::below(eps).unwrap(), &ApproxOptions::default()).unwrap();
    assert!(cert.pass());
    let target = u.len() / 2;
    // adds ε·(x − c), shifting u′ up by ε on one piece only
    let slope = sys.alphas().index_of(&ocm_core::expr::MultiIndex(vec![1])).unwrap();
    u.piece_mut(target).coeffs_mut()[slope] += eps;
    let samples = sample_points(u.partition(), 200, 0.05, 3).unwrap();
    let cert = check_residual(&sys, &u, &rhs, Band::below(eps).unwrap(), 1e-9, &samples).unwrap();
    assert!(!cert.pass());
    assert!(!cert.offenders.is_empty());
    assert!(cert.offenders.iter().all(|o| o.subcell == target && o.component == 1));
    assert!(cert.max_residual() > 0.0);
}

#[test]
fn unreachable_target_names_component() {
    // exp(u′) can never reach a nonpositive target
    let sys = parse_system("exp(D(u1,(1)))", 1, 1, 1).unwrap();
    let err = solve_jet(&sys, &[0.5], &[-1.0], None, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("component 1"), "{msg}");
}
