//! Concept extraction by truncated SVD: `A ≈ U W` with `W = diag(σ) Vᵀ`.
//!
//! Rows of `U` are the concept coefficients of each sample, rows of `W` the
//! concept directions in embedding space. Removing a concept deletes one
//! column of `U` and the matching row of `W`.

mod io;
mod jacobi;
mod randomized;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

pub use io::{load_basis, save_basis, BasisMeta, SIGN_CONVENTION};
pub use jacobi::{jacobi_svd, ThinSvd};

/// Default number of concepts.
pub const DEFAULT_RANK: usize = 20;

/// Singular values below this fraction of the largest one are dropped.
pub const RELATIVE_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdMethod {
    DenseJacobi,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdOptions {
    pub oversampling: usize,
    pub power_iterations: usize,
    /// Inputs with `min(n, d)` at or below this use the dense solver.
    pub dense_threshold: usize,
    /// Overrides the size-based choice of solver.
    pub force_method: Option<SvdMethod>,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            oversampling: 10,
            power_iterations: 4,
            dense_threshold: 512,
            force_method: None,
        }
    }
}

/// A fitted truncated factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBasis {
    u: Array2<f64>,
    w: Array2<f64>,
    singular_values: Array1<f64>,
    v: Array2<f64>,
    seed: u64,
    method: SvdMethod,
}

impl ConceptBasis {
    /// Builds a basis from `U`, `σ` and `V`; `W` is derived as `diag(σ) Vᵀ`.
    pub fn from_parts(
        u: Array2<f64>,
        singular_values: Array1<f64>,
        v: Array2<f64>,
        seed: u64,
        method: SvdMethod,
    ) -> Result<Self> {
        let r = singular_values.len();
        if u.ncols() != r || v.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, V has {}, but there are {r} singular values",
                u.ncols(),
                v.ncols()
            )));
        }
        if r == 0 {
            return Err(Error::Validation("a basis needs at least one concept".into()));
        }
        let mut w = v.t().to_owned();
        for (mut row, &s) in w.axis_iter_mut(Axis(0)).zip(singular_values.iter()) {
            row.mapv_inplace(|x| x * s);
        }
        Ok(Self {
            u,
            w,
            singular_values,
            v,
            seed,
            method,
        })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.v.nrows()
    }

    pub fn r(&self) -> usize {
        self.singular_values.len()
    }

    /// Concept coefficients, `n x r`.
    pub fn u(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    /// Concept directions scaled by their singular values, `r x d`.
    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    /// Right singular vectors, `d x r`.
    pub fn v(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn singular_values(&self) -> ArrayView1<'_, f64> {
        self.singular_values.view()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn method(&self) -> SvdMethod {
        self.method
    }

    fn check_conditioning(&self) -> Result<()> {
        let top = self.singular_values[0];
        for (index, &value) in self.singular_values.iter().enumerate() {
            if !(value >= RELATIVE_RANK_TOL * top) || value <= 0.0 {
                return Err(Error::SingularValueUnderflow { index, value });
            }
        }
        Ok(())
    }

    /// Concept coefficients of one embedding: `a V diag(1/σ)`.
    pub fn project(&self, a: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if a.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} projected onto a basis with d = {}",
                a.len(),
                self.d()
            )));
        }
        if let Some(col) = a.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0, col });
        }
        self.check_conditioning()?;
        Ok(&a.dot(&self.v) / &self.singular_values)
    }

    /// Row-wise [`project`](Self::project) of an `m x d` matrix.
    pub fn project_rows(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "matrix with {} columns projected onto a basis with d = {}",
                x.ncols(),
                self.d()
            )));
        }
        self.check_conditioning()?;
        let mut out = x.dot(&self.v);
        for mut row in out.rows_mut() {
            row /= &self.singular_values;
        }
        Ok(out)
    }

    /// `U W`, the rank-`r` reconstruction of the fitted matrix.
    pub fn reconstruct(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(self.u.dot(&self.w))
            .expect("product of finite factors with non-zero shape")
    }

    /// Deletes the planned concepts (columns of `U` and `V`, rows of `W`,
    /// entries of `σ`), keeping the remaining ones in their original order.
    pub fn apply_removal(&self, plan: &RemovalPlan) -> Result<ConceptBasis> {
        let r = self.r();
        for &index in &plan.removed_indices {
            if index >= r {
                return Err(Error::IndexOutOfRange { index, len: r });
            }
        }
        if plan.k() >= r {
            return Err(Error::RemoveAll(r));
        }
        let keep: Vec<usize> = (0..r)
            .filter(|i| !plan.removed_indices.contains(i))
            .collect();
        Ok(ConceptBasis {
            u: self.u.select(Axis(1), &keep),
            w: self.w.select(Axis(0), &keep),
            singular_values: self.singular_values.select(Axis(0), &keep),
            v: self.v.select(Axis(1), &keep),
            seed: self.seed,
            method: self.method,
        })
    }
}

/// An ordered list of distinct concept indices to delete.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub removed_indices: Vec<usize>,
}

impl RemovalPlan {
    pub fn new(removed_indices: Vec<usize>) -> Result<Self> {
        for (i, a) in removed_indices.iter().enumerate() {
            if removed_indices[..i].contains(a) {
                return Err(Error::Validation(format!(
                    "concept {a} listed twice in removal plan"
                )));
            }
        }
        Ok(Self { removed_indices })
    }

    /// The first `k` entries of a ranking.
    pub fn prefix(ranking: &[usize], k: usize) -> Result<Self> {
        if k > ranking.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: ranking.len(),
            });
        }
        Self::new(ranking[..k].to_vec())
    }

    pub fn k(&self) -> usize {
        self.removed_indices.len()
    }
}

/// Extracts a concept basis from an embedding matrix. Only the truncated SVD
/// is provided.
pub trait ConceptExtractor {
    fn fit(&self, a: &EmbeddingMatrix, r: usize) -> Result<ConceptBasis>;
}

#[derive(Debug, Clone, Default)]
pub struct TruncatedSvd {
    pub seed: u64,
    pub options: SvdOptions,
}

impl ConceptExtractor for TruncatedSvd {
    fn fit(&self, a: &EmbeddingMatrix, r: usize) -> Result<ConceptBasis> {
        truncated_svd_with(a, r, self.seed, &self.options)
    }
}

/// Best rank-`r` factorization of `a` with default solver options.
pub fn truncated_svd(a: &EmbeddingMatrix, r: usize, seed: u64) -> Result<ConceptBasis> {
    truncated_svd_with(a, r, seed, &SvdOptions::default())
}

pub fn truncated_svd_with(
    a: &EmbeddingMatrix,
    r: usize,
    seed: u64,
    options: &SvdOptions,
) -> Result<ConceptBasis> {
    let (n, d) = (a.n(), a.d());
    let max = n.min(d);
    if r == 0 || r > max {
        return Err(Error::RankTooLarge { requested: r, max });
    }
    let method = options.force_method.unwrap_or(if max <= options.dense_threshold {
        SvdMethod::DenseJacobi
    } else {
        SvdMethod::Randomized
    });
    let svd = match method {
        SvdMethod::DenseJacobi => jacobi_svd(a.view())?,
        SvdMethod::Randomized => randomized::randomized_svd(a.view(), r, seed, options)?,
    };

    let top = svd.s[0];
    if !(top > 0.0) {
        return Err(Error::SingularValueUnderflow {
            index: 0,
            value: top,
        });
    }
    let kept = svd
        .s
        .iter()
        .take(r)
        .take_while(|&&s| s >= RELATIVE_RANK_TOL * top && s > 0.0)
        .count();
    if kept < r {
        log::warn!("matrix is numerically rank {kept}; reducing the basis from {r} concepts");
    }

    let mut u = svd.u.slice(ndarray::s![.., ..kept]).to_owned();
    let mut v = svd.v.slice(ndarray::s![.., ..kept]).to_owned();
    let s = svd.s.slice(ndarray::s![..kept]).to_owned();
    apply_sign_convention(&mut u, &mut v);
    ConceptBasis::from_parts(u, s, v, seed, method)
}

/// Flips each (u, v) pair so that the largest-magnitude entry of `v` is
/// positive (first such entry on ties).
fn apply_sign_convention(u: &mut Array2<f64>, v: &mut Array2<f64>) {
    for j in 0..v.ncols() {
        let col = v.column(j);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            v.column_mut(j).mapv_inplace(|x| -x);
            u.column_mut(j).mapv_inplace(|x| -x);
        }
    }
}
