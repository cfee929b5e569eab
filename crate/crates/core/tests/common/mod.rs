//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
}

/// Singular values of `a`, descending, from a cyclic two-sided Jacobi
/// eigensolver applied to the smaller Gram matrix.
pub fn oracle_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let gram = if a.nrows() >= a.ncols() {
        a.t().dot(a)
    } else {
        a.dot(&a.t())
    };
    let mut eig = symmetric_eigenvalues(gram);
    eig.sort_by(|x, y| y.total_cmp(x));
    eig.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

fn symmetric_eigenvalues(mut s: Array2<f64>) -> Vec<f64> {
    let n = s.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[[i, j]] * s[[i, j]])
            .sum();
        let diag: f64 = (0..n).map(|i| s[[i, i]] * s[[i, i]]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[[q, q]] - s[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[[k, p]], s[[k, q]]);
                    s[[k, p]] = c * skp - sn * skq;
                    s[[k, q]] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[[p, k]], s[[q, k]]);
                    s[[p, k]] = c * spk - sn * sqk;
                    s[[q, k]] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n).map(|i| s[[i, i]]).collect()
}

/// Total indices of `f(m1, m2)` for independent uniform inputs, by midpoint
/// integration on a `g x g` grid.
pub fn grid_total_indices(f: impl Fn(f64, f64) -> f64, g: usize) -> [f64; 2] {
    let pts: Vec<f64> = (0..g).map(|i| (i as f64 + 0.5) / g as f64).collect();
    let vals = Array2::from_shape_fn((g, g), |(i, j)| f(pts[i], pts[j]));
    let n = (g * g) as f64;
    let mean = vals.sum() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    // E over the other input of Var over input k.
    let conditional = |axis: usize| {
        let mut total = 0.0;
        for fixed in 0..g {
            let line: Vec<f64> = (0..g)
                .map(|free| if axis == 0 { vals[[free, fixed]] } else { vals[[fixed, free]] })
                .collect();
            let m = line.iter().sum::<f64>() / g as f64;
            total += line.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / g as f64;
        }
        total / g as f64 / var
    };
    [conditional(0), conditional(1)]
}

/// L2-star discrepancy of points in `[0, 1)^s` (Warnock's formula).
pub fn l2_star_discrepancy(points: &Array2<f64>) -> f64 {
    let (n, s) = points.dim();
    let nf = n as f64;
    let first = 3f64.powi(-(s as i32));
    let second: f64 = points
        .rows()
        .into_iter()
        .map(|x| x.iter().map(|v| (1.0 - v * v) / 2.0).product::<f64>())
        .sum::<f64>()
        * 2.0
        / nf;
    let mut third = 0.0;
    for i in 0..n {
        for j in 0..n {
            third += (0..s)
                .map(|k| 1.0 - points[[i, k]].max(points[[j, k]]))
                .product::<f64>();
        }
    }
    (first - second + third / (nf * nf)).max(0.0).sqrt()
}
