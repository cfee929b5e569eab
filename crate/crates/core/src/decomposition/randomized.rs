//! Randomized range finder followed by a small dense SVD.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::jacobi::{jacobi_svd, ThinSvd};
use super::SvdOptions;
use crate::error::Result;
use crate::linalg::{gaussian_matrix, orthonormalize_columns};

const ORTHO_TOL: f64 = 1e-12;

/// Approximates the top singular triplets of `a` from a Gaussian sketch with
/// `r + oversampling` columns and re-orthonormalized power iterations.
pub(crate) fn randomized_svd(
    a: ArrayView2<'_, f64>,
    r: usize,
    seed: u64,
    options: &SvdOptions,
) -> Result<ThinSvd> {
    let (n, d) = a.dim();
    let width = (r + options.oversampling).min(n.min(d));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let omega = gaussian_matrix(&mut rng, d, width);
    let mut q: Array2<f64> = a.dot(&omega);
    orthonormalize_columns(&mut q, ORTHO_TOL);
    for _ in 0..options.power_iterations {
        let mut z = a.t().dot(&q);
        orthonormalize_columns(&mut z, ORTHO_TOL);
        q = a.dot(&z);
        orthonormalize_columns(&mut q, ORTHO_TOL);
    }

    // B = Qᵀ A is small (width x d); its SVD lifts back through Q.
    let b = q.t().dot(&a);
    let small = jacobi_svd(b.view())?;
    Ok(ThinSvd {
        u: q.dot(&small.u),
        s: small.s,
        v: small.v,
    })
}
