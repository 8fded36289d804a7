#![allow(dead_code)]

use ocm_core::baire::{ExtReal, GridFn, Lattice};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random piecewise grid function on a 1-D or 2-D lattice of at most
/// 1000 nodes. Piece boundaries are lattice lines kept at least two nodes
/// apart; a random subset of them is masked and carries junk values.
pub fn random_piecewise(rng: &mut ChaCha8Rng) -> GridFn {
    let dim = rng.gen_range(1..=2);
    let shape: Vec<usize> = if dim == 1 {
        vec![rng.gen_range(3..=200)]
    } else {
        vec![rng.gen_range(3..=31), rng.gen_range(3..=31)]
    };
    let axes: Vec<Vec<f64>> = shape
        .iter()
        .map(|&n| {
            let mut x = 0.0;
            (0..n)
                .map(|_| {
                    x += rng.gen_range(0.1..1.0);
                    x
                })
                .collect()
        })
        .collect();
    let lattice = Lattice::new(axes).unwrap();

    // per axis: breakpoint indices at least 2 apart
    let breaks: Vec<Vec<usize>> = shape
        .iter()
        .map(|&n| {
            let mut b = Vec::new();
            let mut i = rng.gen_range(0..3);
            while i < n {
                if rng.gen_bool(0.3) {
                    b.push(i);
                    i += 2;
                }
                i += 1;
            }
            b
        })
        .collect();
    let mask_axis: Vec<Vec<usize>> = breaks
        .iter()
        .map(|b| b.iter().copied().filter(|_| rng.gen_bool(0.7)).collect())
        .collect();

    let pieces: Vec<[f64; 3]> = (0..32)
        .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2)])
        .collect();
    let n_nodes = lattice.len();
    let mut values = Vec::with_capacity(n_nodes);
    let mut mask = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let idx = lattice.multi_index(node);
        let x = lattice.point(node);
        let piece_id: usize = idx
            .iter()
            .enumerate()
            .map(|(d, &i)| breaks[d].iter().filter(|&&b| b <= i).count())
            .fold(0, |acc, p| acc * 7 + p)
            % pieces.len();
        let [a, b, c] = pieces[piece_id];
        let s: f64 = x.iter().sum();
        let masked = idx
            .iter()
            .enumerate()
            .any(|(d, i)| mask_axis[d].contains(i));
        let v = if masked && rng.gen_bool(0.5) {
            match rng.gen_range(0..4) {
                0 => ExtReal::PosInf,
                1 => ExtReal::NegInf,
                _ => ExtReal::finite(rng.gen_range(-10.0..10.0)),
            }
        } else if rng.gen_bool(0.01) {
            if rng.gen_bool(0.5) {
                ExtReal::PosInf
            } else {
                ExtReal::NegInf
            }
        } else {
            ExtReal::finite(a + b * s + c * s * s)
        };
        values.push(v);
        mask.push(masked);
    }
    GridFn::with_mask(lattice, values, mask).unwrap()
}

/// All nodes within index distance `r` of `node`, `node` first.
fn ball(l: &Lattice, node: usize, r: isize) -> Vec<usize> {
    let idx = l.multi_index(node);
    let shape = l.shape();
    let mut out = vec![node];
    let n = idx.len();
    let side = (2 * r + 1) as usize;
    for code in 0..side.pow(n as u32) {
        let mut c = code;
        let mut j = Vec::with_capacity(n);
        for &i in &idx {
            let off = (c % side) as isize - r;
            c /= side;
            j.push(i as isize + off);
        }
        if j.iter().zip(&shape).all(|(&v, &s)| v >= 0 && v < s as isize) {
            let flat = l.flat(&j.iter().map(|&v| v as usize).collect::<Vec<_>>());
            if flat != node {
                out.push(flat);
            }
        }
    }
    out
}

/// Open in the lattice topology: every masked member keeps all of its
/// unmasked neighbours inside.
fn interior(f: &GridFn, set: &[usize]) -> Vec<usize> {
    let l = f.lattice();
    let mut cur: Vec<usize> = set.to_vec();
    loop {
        let next: Vec<usize> = cur
            .iter()
            .copied()
            .filter(|&m| {
                !f.is_masked(m)
                    || ball(l, m, 1)[1..]
                        .iter()
                        .filter(|&&y| !f.is_masked(y))
                        .all(|y| cur.contains(y))
            })
            .collect();
        if next.len() == cur.len() {
            return cur;
        }
        cur = next;
    }
}

/// `sup_V inf_{y∈V} f(y)` (or the dual) over every neighbourhood `V` of
/// each node drawn from a surrounding ball, read off the definition.
pub fn brute_envelope(f: &GridFn, lower: bool) -> Vec<ExtReal> {
    let l = f.lattice();
    let r = if l.dim() == 1 { 2 } else { 1 };
    (0..f.len())
        .map(|x| {
            let b = ball(l, x, r);
            let others = &b[1..];
            let mut best: Option<ExtReal> = None;
            for sub in 0u32..1 << others.len() {
                let v: Vec<usize> = std::iter::once(x)
                    .chain((0..others.len()).filter(|i| sub >> i & 1 == 1).map(|i| others[i]))
                    .collect();
                if !interior(f, &v).contains(&x) {
                    continue;
                }
                let vals = v.iter().map(|&y| f.value(y));
                let inner = if lower { vals.min().unwrap() } else { vals.max().unwrap() };
                best = Some(match best {
                    None => inner,
                    Some(b) if lower => b.max(inner),
                    Some(b) => b.min(inner),
                });
            }
            best.expect("the ball itself contains an open set around the node")
        })
        .collect()
}
