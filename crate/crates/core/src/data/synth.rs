//! Synthetic embeddings with a planted sensitive direction.
//!
//! Latent coordinates `L` (`n x r_true`) are mapped to embedding space by a
//! random orthonormal basis `B` (`d x r_true`): `A = L Bᵀ + noise`.
//!
//! * Task labels are uniform over the classes. Task columns hold a class
//!   centroid plus within-cell noise.
//! * Sensitive labels are drawn from `P(g | y)`, whose bias toward `g = 1`
//!   alternates with the parity of `y` and has strength `leak`. The Bayes
//!   accuracy of predicting `g` from `y` alone is `0.5 + leak / 2`.
//! * Sensitive columns hold `±1` (the sign of `g`) plus a bounded wiggle, so
//!   `g = [L[:, s] > 0]` for every sensitive dimension `s`.
//!
//! Every source of within-cell variation is centred inside its `(y, g)`
//! cell, and the centroids are chosen orthogonal to the empirical group
//! imbalance. Sensitive columns are therefore exactly orthogonal to all other
//! latent columns, which makes the planted direction a singular vector of `L`.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, orthonormalize_columns, random_orthonormal};

const WITHIN_CLASS_SIGMA: f64 = 0.15;
const SENSITIVE_WIGGLE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub r_true: usize,
    pub sensitive_dims: Vec<usize>,
    pub task_dims: Vec<usize>,
    /// Correlation between the sensitive label and the parity group of the
    /// task label, in `[0, 1]`.
    pub leak: f64,
    pub noise_sigma: f64,
    pub num_task_classes: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 32,
            r_true: 6,
            sensitive_dims: vec![2],
            task_dims: vec![0, 1],
            leak: 0.24,
            noise_sigma: 0.05,
            num_task_classes: 4,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n < 1 || self.d < 1 {
            return bad(format!("n and d must be positive, got {}x{}", self.n, self.d));
        }
        if self.r_true < 1 || self.r_true > self.d {
            return bad(format!("r_true = {} must lie in [1, d = {}]", self.r_true, self.d));
        }
        if self.num_task_classes < 2 {
            return bad("num_task_classes must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.leak) {
            return bad(format!("leak = {} is not in [0, 1]", self.leak));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {} must be >= 0", self.noise_sigma));
        }
        if self.sensitive_dims.is_empty() || self.task_dims.is_empty() {
            return bad("sensitive_dims and task_dims must be non-empty".into());
        }
        for &dim in self.sensitive_dims.iter().chain(&self.task_dims) {
            if dim >= self.r_true {
                return bad(format!("latent dim {dim} >= r_true = {}", self.r_true));
            }
        }
        let overlap = self
            .sensitive_dims
            .iter()
            .any(|s| self.task_dims.contains(s));
        if overlap && self.leak == 0.0 {
            return bad("sensitive_dims and task_dims overlap but leak = 0".into());
        }
        Ok(())
    }

    /// Population Bayes accuracy of predicting the sensitive label from the
    /// task label alone.
    pub fn population_floor(&self) -> f64 {
        0.5 + 0.5 * self.leak
    }
}

/// Contingency table of task label (rows) by sensitive label (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointTable {
    pub counts: Vec<Vec<usize>>,
}

impl JointTable {
    pub fn from_labels(task: &LabelVector, sensitive: &LabelVector) -> Self {
        let mut counts = vec![vec![0; sensitive.num_classes()]; task.num_classes()];
        for (&y, &g) in task.values().iter().zip(sensitive.values()) {
            counts[y][g] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Best accuracy of any rule that sees only the task label:
    /// `sum_y max_g n(y, g) / n`.
    pub fn bayes_accuracy(&self) -> f64 {
        let hits: usize = self
            .counts
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .sum();
        hits as f64 / self.total().max(1) as f64
    }
}

/// Everything the generator planted, for oracle tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub spec: SynthSpec,
    /// Planted basis, `d` rows of `r_true` entries.
    pub basis: Vec<Vec<f64>>,
    /// Root-mean-square magnitude of each latent column.
    pub latent_scales: Vec<f64>,
    pub joint_table: JointTable,
    pub floor_accuracy: f64,
    pub population_floor: f64,
}

impl SynthMeta {
    pub fn basis_matrix(&self) -> Array2<f64> {
        let d = self.basis.len();
        let r = self.basis.first().map_or(0, Vec::len);
        Array2::from_shape_fn((d, r), |(i, j)| self.basis[i][j])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub bundle: DatasetBundle,
    pub meta: SynthMeta,
    /// Latent coordinates before the basis map (for oracle tests).
    pub latent: Array2<f64>,
}

fn parity_group(y: usize) -> f64 {
    if y.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Subtracts the mean of each `(y, g)` cell from `col`.
fn centre_in_cells(col: &mut Array1<f64>, cells: &[usize], num_cells: usize) {
    let mut sums = vec![0.0; num_cells];
    let mut counts = vec![0usize; num_cells];
    for (&c, &v) in cells.iter().zip(col.iter()) {
        sums[c] += v;
        counts[c] += 1;
    }
    for (v, &c) in col.iter_mut().zip(cells) {
        *v -= sums[c] / counts[c] as f64;
    }
}

/// Class centroids (`C x m`) orthogonal to the class sizes and, when the
/// class count leaves room, to the per-class sensitive imbalance.
fn centroids(rng: &mut ChaCha8Rng, table: &JointTable, m: usize) -> Array2<f64> {
    let c = table.counts.len();
    let sizes: Array1<f64> = table.counts.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let imbalance: Array1<f64> = table
        .counts
        .iter()
        .map(|r| r[1] as f64 - r[0] as f64)
        .collect();

    // With two classes the imbalance constraint would erase all task signal.
    let mut constraints = Array2::zeros((c, if c >= 3 { 2 } else { 1 }));
    constraints.column_mut(0).assign(&sizes);
    if c >= 3 {
        constraints.column_mut(1).assign(&imbalance);
    }
    orthonormalize_columns(&mut constraints, 1e-9);

    let mut k = gaussian_matrix(rng, c, m);
    for q in constraints.columns() {
        for mut col in k.columns_mut() {
            let p = q.dot(&col);
            col.scaled_add(-p, &q);
        }
    }
    let mut ortho = k.clone();
    if orthonormalize_columns(&mut ortho, 1e-8) == m {
        k = ortho;
    } else {
        for mut col in k.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|x| x / norm);
            }
        }
    }
    // Unit mean squared centroid norm, weighted by class size.
    let total: f64 = sizes.sum();
    let msq: f64 = k
        .rows()
        .into_iter()
        .zip(sizes.iter())
        .map(|(row, &s)| s * row.dot(&row))
        .sum::<f64>()
        / total.max(1.0);
    if msq > 0.0 {
        k.mapv_inplace(|x| x / msq.sqrt());
    }
    k
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let SynthSpec {
        n,
        d,
        r_true,
        num_task_classes: classes,
        ..
    } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let task: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let sensitive: Vec<usize> = task
        .iter()
        .map(|&y| {
            let p1 = 0.5 + 0.5 * spec.leak * parity_group(y);
            usize::from(rng.random::<f64>() < p1)
        })
        .collect();
    let task = LabelVector::new(task, classes)?;
    let sensitive = LabelVector::new(sensitive, 2)?;
    let table = JointTable::from_labels(&task, &sensitive);
    let cells: Vec<usize> = task
        .values()
        .iter()
        .zip(sensitive.values())
        .map(|(&y, &g)| y * 2 + g)
        .collect();
    let num_cells = classes * 2;

    let mut latent = Array2::<f64>::zeros((n, r_true));

    // Within-cell noise for every non-sensitive column.
    let mut noise_cols: Vec<usize> = Vec::new();
    for j in 0..r_true {
        if spec.sensitive_dims.contains(&j) && !spec.task_dims.contains(&j) {
            continue;
        }
        let mut col: Array1<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        centre_in_cells(&mut col, &cells, num_cells);
        if spec.task_dims.contains(&j) {
            col.mapv_inplace(|x| x * WITHIN_CLASS_SIGMA);
        }
        latent.column_mut(j).assign(&col);
        noise_cols.push(j);
    }

    let k = centroids(&mut rng, &table, spec.task_dims.len());
    for (t, &j) in spec.task_dims.iter().enumerate() {
        for (i, &y) in task.values().iter().enumerate() {
            latent[[i, j]] += k[[y, t]];
        }
    }

    // Sensitive columns: sign of g plus a wiggle orthogonal to all noise.
    let mut others: Array2<f64> = latent.select(Axis(1), &noise_cols);
    for &j in &spec.sensitive_dims {
        let mut v: Array1<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        centre_in_cells(&mut v, &cells, num_cells);
        let mut q = others.clone();
        orthonormalize_columns(&mut q, 1e-12);
        for _pass in 0..2 {
            for col in q.columns() {
                let p = col.dot(&v);
                v.scaled_add(-p, &col);
            }
        }
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if max > 0.0 {
            v.mapv_inplace(|x| x * SENSITIVE_WIGGLE / max);
        }
        let mut col = latent.column_mut(j);
        for (i, &g) in sensitive.values().iter().enumerate() {
            col[i] += if g == 1 { 1.0 } else { -1.0 } + v[i];
        }
        // Later sensitive wiggles stay orthogonal to this one.
        let mut grown = Array2::zeros((n, others.ncols() + 1));
        grown.slice_mut(ndarray::s![.., ..others.ncols()]).assign(&others);
        grown.column_mut(others.ncols()).assign(&v);
        others = grown;
    }

    // Distinct magnitudes per latent column keep the singular values apart.
    let mut scales = Vec::with_capacity(r_true);
    for j in 0..r_true {
        let target = 3.0 * 0.8f64.powi(j as i32);
        let mut col = latent.column_mut(j);
        let rms = (col.dot(&col) / n as f64).sqrt();
        if rms > 0.0 {
            col.mapv_inplace(|x| x * target / rms);
        }
        scales.push(target);
    }

    let basis = random_orthonormal(&mut rng, d, r_true);
    let mut values = latent.dot(&basis.t());
    if spec.noise_sigma > 0.0 {
        for v in values.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += spec.noise_sigma * e;
        }
    }

    let embeddings = EmbeddingMatrix::new(values)?;
    let floor_accuracy = table.bayes_accuracy();
    let bundle = DatasetBundle::new(embeddings, task, sensitive, None)?;
    let meta = SynthMeta {
        spec: spec.clone(),
        basis: basis.rows().into_iter().map(|r| r.to_vec()).collect(),
        latent_scales: scales,
        joint_table: table,
        floor_accuracy,
        population_floor: spec.population_floor(),
    };
    Ok(SynthOutput {
        bundle,
        meta,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            n: 800,
            d: 16,
            r_true: 5,
            sensitive_dims: vec![1],
            task_dims: vec![0, 2],
            leak: 0.24,
            noise_sigma: 0.0,
            num_task_classes: 4,
            seed: 11,
        }
    }

    #[test]
    fn sensitive_label_is_threshold_of_latent() {
        let out = synth_generate(&spec()).unwrap();
        for (i, &g) in out.bundle.sensitive.values().iter().enumerate() {
            assert_eq!(usize::from(out.latent[[i, 1]] > 0.0), g);
        }
    }

    #[test]
    fn sensitive_column_is_orthogonal_to_the_rest() {
        let out = synth_generate(&spec()).unwrap();
        let s = out.latent.column(1);
        for j in [0, 2, 3, 4] {
            let c = out.latent.column(j);
            let cos = s.dot(&c) / (s.dot(&s).sqrt() * c.dot(&c).sqrt());
            assert!(cos.abs() < 1e-10, "column {j}: cos = {cos}");
        }
    }

    #[test]
    fn noiseless_embeddings_reproduce_latent_map() {
        let out = synth_generate(&spec()).unwrap();
        let b = out.meta.basis_matrix();
        let recon = out.latent.dot(&b.t());
        let diff = (&recon - out.bundle.embeddings.as_array())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn population_floor_for_even_classes() {
        assert!((spec().population_floor() - 0.62).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let a = synth_generate(&spec()).unwrap();
        let b = synth_generate(&spec()).unwrap();
        assert_eq!(a.bundle, b.bundle);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec();
        s.r_true = 20;
        assert!(synth_generate(&s).is_err());
        let mut s = spec();
        s.task_dims = vec![1];
        s.leak = 0.0;
        assert!(matches!(synth_generate(&s), Err(Error::InvalidSpec(_))));
        let mut s = spec();
        s.leak = 1.5;
        assert!(synth_generate(&s).is_err());
    }

    #[test]
    fn joint_table_bayes_rate() {
        let t = JointTable {
            counts: vec![vec![38, 62], vec![62, 38]],
        };
        assert!((t.bayes_accuracy() - 0.62).abs() < 1e-15);
    }
}
