//! Total Sobol indices of concepts for a head's output.
//!
//! Masks `m ∈ [0,1]^r` scale the concept coefficients of one sample,
//! `u ↦ (u ⊙ m) W`, and the head's top-two logit gap is the model output.
//! Indices use Jansen's pick-freeze estimator, per evaluation row, then
//! averaged over rows.

mod design;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::ConceptBasis;
use crate::error::{Error, Result};
use crate::heads::MlpHead;
use crate::linalg::pairwise_sum;

pub use design::{sample_design, sobol_points, DesignParams, MaskDesign, MaskGenerator};

pub const DEFAULT_EVAL_ROWS: usize = 256;

/// Gap between the largest and second-largest entry.
pub fn top_two_gap(logits: ArrayView1<'_, f64>) -> f64 {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &l in logits {
        if l > first {
            second = first;
            first = l;
        } else if l > second {
            second = l;
        }
    }
    first - second
}

/// Top-two logit gap of the head on the embedding `u W`.
pub fn phi(head: &MlpHead, u: ArrayView1<'_, f64>, w: ArrayView2<'_, f64>) -> Result<f64> {
    if u.len() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector of length {} for a basis with {} concepts",
            u.len(),
            w.nrows()
        )));
    }
    let x = u.dot(&w).insert_axis(Axis(0));
    let logits = head.predict_logits(x.view())?;
    Ok(top_two_gap(logits.row(0)))
}

/// Total indices of one model output over one design.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalIndices {
    /// Estimates before clamping to `[0, 1]`.
    pub raw: Vec<f64>,
    pub indices: Vec<f64>,
    /// Monte Carlo standard error of each index.
    pub std_err: Vec<f64>,
    /// Variance of the output over `A ∪ B`.
    pub variance: f64,
}

/// Jansen estimator from output values laid out as [`MaskDesign::stacked`]:
/// `f(A)`, `f(B)`, then `f(A_B^(i))` for each `i`.
///
/// Fails with `ZeroVariance` when the output is constant over `A ∪ B`.
pub fn jansen_from_stacked(values: &[f64], n: usize, r: usize) -> Result<TotalIndices> {
    if values.len() != (r + 2) * n || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} outputs for a design with N = {n}, r = {r}",
            values.len()
        )));
    }
    let base = &values[..2 * n];
    let mean = pairwise_sum(base) / base.len() as f64;
    let dev: Vec<f64> = base.iter().map(|f| (f - mean) * (f - mean)).collect();
    let variance = pairwise_sum(&dev) / base.len() as f64;
    let scale = base.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if !(variance > (1e-12 * scale).powi(2)) {
        return Err(Error::ZeroVariance);
    }

    let fa = &values[..n];
    let mut raw = Vec::with_capacity(r);
    let mut std_err = Vec::with_capacity(r);
    let mut half_sq = vec![0.0; n];
    for i in 0..r {
        let fab = &values[(2 + i) * n..(3 + i) * n];
        for ((h, a), b) in half_sq.iter_mut().zip(fa).zip(fab) {
            *h = 0.5 * (a - b) * (a - b);
        }
        let m = pairwise_sum(&half_sq) / n as f64;
        let sd = if n > 1 {
            let dev: Vec<f64> = half_sq.iter().map(|h| (h - m) * (h - m)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        raw.push(m / variance);
        std_err.push(sd / (n as f64).sqrt() / variance);
    }
    let indices = raw.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    Ok(TotalIndices {
        raw,
        indices,
        std_err,
        variance,
    })
}

/// Total indices of an arbitrary model over a design. `model` maps a batch
/// of masks (one per row) to one output per row.
pub fn total_indices_of<F>(design: &MaskDesign, mut model: F) -> Result<TotalIndices>
where
    F: FnMut(ArrayView2<'_, f64>) -> Vec<f64>,
{
    let stacked = design.stacked();
    let values = model(stacked.view());
    jansen_from_stacked(&values, design.n(), design.r())
}

/// Mean total indices of one head over a set of evaluation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub indices: Vec<f64>,
    pub std_err: Vec<f64>,
    pub rows_used: usize,
    pub rows_skipped: usize,
}

/// Batched top-two gaps of `head` at `(u ⊙ m) W` for every mask row `m`.
/// Uses `(u ⊙ m) W w1 = m (diag(u) W w1)`.
struct BatchedPhi<'a> {
    head: &'a MlpHead,
    w_w1: Array2<f64>,
}

impl<'a> BatchedPhi<'a> {
    fn new(head: &'a MlpHead, basis: &ConceptBasis) -> Result<Self> {
        if head.d_in() != basis.d() {
            return Err(Error::DimensionMismatch(format!(
                "head expects {} features, basis has d = {}",
                head.d_in(),
                basis.d()
            )));
        }
        Ok(Self {
            head,
            w_w1: basis.w().dot(&head.w1()),
        })
    }

    fn eval(&self, u: ArrayView1<'_, f64>, masks: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut p = self.w_w1.clone();
        for (mut row, &ui) in p.rows_mut().into_iter().zip(u) {
            row.mapv_inplace(|x| x * ui);
        }
        let pre = masks.dot(&p) + self.head.b1();
        let logits = self.head.logits_from_pre(pre);
        logits.rows().into_iter().map(top_two_gap).collect()
    }
}

/// Total Sobol index of every concept for `head`, averaged over the rows
/// `eval_rows` of the basis coefficients. Rows whose output is constant over
/// the design are skipped.
pub fn total_sobol(
    head: &MlpHead,
    basis: &ConceptBasis,
    eval_rows: &[usize],
    design: &MaskDesign,
) -> Result<SobolEstimate> {
    let stacked = design.stacked();
    total_sobol_stacked(head, basis, eval_rows, design, &stacked)
}

fn total_sobol_stacked(
    head: &MlpHead,
    basis: &ConceptBasis,
    eval_rows: &[usize],
    design: &MaskDesign,
    stacked: &Array2<f64>,
) -> Result<SobolEstimate> {
    if eval_rows.is_empty() {
        return Err(Error::Validation("no evaluation rows".into()));
    }
    if design.r() != basis.r() {
        return Err(Error::DimensionMismatch(format!(
            "design has r = {}, basis has r = {}",
            design.r(),
            basis.r()
        )));
    }
    if let Some(&index) = eval_rows.iter().find(|&&i| i >= basis.n()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: basis.n(),
        });
    }
    let batched = BatchedPhi::new(head, basis)?;
    let (n, r) = (design.n(), design.r());
    let u = basis.u();

    let per_row: Vec<Result<Option<TotalIndices>>> = eval_rows
        .par_iter()
        .map(|&row| {
            let values = batched.eval(u.row(row), stacked.view());
            match jansen_from_stacked(&values, n, r) {
                Ok(t) => Ok(Some(t)),
                Err(Error::ZeroVariance) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut used = Vec::with_capacity(per_row.len());
    for (res, &row) in per_row.into_iter().zip(eval_rows) {
        match res? {
            Some(t) => used.push(t),
            None => log::warn!("output is constant over the design for row {row}; skipped"),
        }
    }
    if used.is_empty() {
        return Err(Error::ZeroVariance);
    }
    let rows_used = used.len();
    let mut indices = Vec::with_capacity(r);
    let mut std_err = Vec::with_capacity(r);
    let mut column = vec![0.0; rows_used];
    for i in 0..r {
        for (c, t) in column.iter_mut().zip(&used) {
            *c = t.indices[i];
        }
        indices.push(pairwise_sum(&column) / rows_used as f64);
        for (c, t) in column.iter_mut().zip(&used) {
            *c = t.std_err[i] * t.std_err[i];
        }
        std_err.push(pairwise_sum(&column).sqrt() / rows_used as f64);
    }
    Ok(SobolEstimate {
        indices,
        std_err,
        rows_used,
        rows_skipped: eval_rows.len() - rows_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportancePair {
    #[serde(rename = "index", alias = "concept_index")]
    pub concept_index: usize,
    pub s_task: f64,
    pub s_sensitive: f64,
    pub n_eval_samples: usize,
    pub std_err_task: f64,
    pub std_err_sensitive: f64,
}

/// Total indices of every concept for both heads, over one shared design.
/// Sorted by concept index.
pub fn co_importance(
    basis: &ConceptBasis,
    head_task: &MlpHead,
    head_sensitive: &MlpHead,
    eval_rows: &[usize],
    design: &MaskDesign,
) -> Result<Vec<ImportancePair>> {
    let stacked = design.stacked();
    let task = total_sobol_stacked(head_task, basis, eval_rows, design, &stacked)?;
    let sens = total_sobol_stacked(head_sensitive, basis, eval_rows, design, &stacked)?;
    Ok((0..basis.r())
        .map(|i| ImportancePair {
            concept_index: i,
            s_task: task.indices[i],
            s_sensitive: sens.indices[i],
            n_eval_samples: task.rows_used.min(sens.rows_used),
            std_err_task: task.std_err[i],
            std_err_sensitive: sens.std_err[i],
        })
        .collect())
}

/// Up to `count` positions of `labels`, allocated across classes in
/// proportion to their frequency (largest remainders first, lower class on
/// ties) and drawn without replacement. Returned in ascending order.
pub fn select_eval_rows(labels: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if count >= n {
        return (0..n).collect();
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut quota: Vec<usize> = members.iter().map(|m| m.len() * count / n).collect();
    let mut remainders: Vec<(usize, usize)> = members
        .iter()
        .enumerate()
        .map(|(c, m)| ((m.len() * count) % n, c))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = count - quota.iter().sum::<usize>();
    for &(_, c) in &remainders {
        if missing == 0 {
            break;
        }
        if quota[c] < members[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for (m, &q) in members.iter_mut().zip(&quota) {
        m.shuffle(&mut rng);
        out.extend_from_slice(&m[..q]);
    }
    out.sort_unstable();
    out
}

/// Serialized output of an importance run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub r: usize,
    pub design: DesignParams,
    pub eval_rows: Vec<usize>,
    pub concepts: Vec<ImportancePair>,
}

impl ImportanceReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
