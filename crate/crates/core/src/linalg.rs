//! Small dense helpers shared by the decomposition and the generator.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Modified Gram-Schmidt with one re-orthogonalization pass, in place.
///
/// Columns that collapse below `tol` relative to their original norm are set
/// to zero. Returns the number of non-zero columns kept.
pub(crate) fn orthonormalize_columns(a: &mut Array2<f64>, tol: f64) -> usize {
    let k = a.ncols();
    let mut kept = 0;
    let mut live = vec![false; k];
    for j in 0..k {
        let original = a.column(j).dot(&a.column(j)).sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                if !live[i] {
                    continue;
                }
                let proj = a.column(i).dot(&a.column(j));
                let qi = a.column(i).to_owned();
                a.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if original > 0.0 && norm > tol * original && norm > f64::MIN_POSITIVE {
            a.column_mut(j).mapv_inplace(|x| x / norm);
            live[j] = true;
            kept += 1;
        } else {
            a.column_mut(j).fill(0.0);
        }
    }
    kept
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Random `rows x cols` matrix with orthonormal columns (`cols <= rows`).
pub(crate) fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    loop {
        let mut q = gaussian_matrix(rng, rows, cols);
        if orthonormalize_columns(&mut q, 1e-10) == cols {
            return q;
        }
    }
}

#[cfg(test)]
pub(crate) fn frobenius_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Max absolute deviation of `QᵀQ` from the identity.
pub fn orthonormality_error(q: ArrayView2<'_, f64>) -> f64 {
    let gram = q.t().dot(&q);
    gram.indexed_iter()
        .map(|((i, j), &g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Pairwise (tree) summation, so the rounding pattern depends only on the
/// length of the input.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        len => {
            let mid = len / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
