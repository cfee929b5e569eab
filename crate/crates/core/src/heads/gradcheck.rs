//! Central finite-difference check of the analytic gradient.

use ndarray::ArrayView2;

use super::{Gradients, MlpHead};
use crate::error::Result;

pub const DEFAULT_GRAD_CHECK_EPSILON: f64 = 1e-5;

/// Denominator floor so that gradients that are exactly or nearly zero are
/// compared absolutely.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Largest relative difference between `analytic` and central finite
/// differences of the mean cross-entropy, over every parameter.
pub fn compare_gradients(
    head: &MlpHead,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    epsilon: f64,
    analytic: &Gradients,
) -> Result<f64> {
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    let total = probe.num_params();
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    for k in 0..total {
        let original = *probe.params_mut().nth(k).unwrap();
        *probe.params_mut().nth(k).unwrap() = original + epsilon;
        let plus = probe.loss(x, y)?;
        *probe.params_mut().nth(k).unwrap() = original - epsilon;
        let minus = probe.loss(x, y)?;
        *probe.params_mut().nth(k).unwrap() = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// [`compare_gradients`] against the head's own backward pass. Meant for
/// small batches (a handful of rows).
pub fn grad_check(head: &MlpHead, x: ArrayView2<'_, f64>, y: &[usize], epsilon: f64) -> Result<f64> {
    let (_, grads) = head.loss_and_gradients(x, y)?;
    compare_gradients(head, x, y, epsilon, &grads)
}
