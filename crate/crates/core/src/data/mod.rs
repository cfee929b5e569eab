//! Dataset types: embeddings, label vectors and the bundle that ties them
//! together, plus file I/O, splitting and the planted-bias generator.

mod emb1;
mod labels;
mod split;
mod synth;

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use emb1::{read_emb1, read_emb1_header, write_emb1, EMB1_MAGIC, EMB1_VERSION};
pub use labels::{read_labels, write_labels};
pub use split::{split, split_indices, SplitIndices, SplitSpec, Stratify};
pub use synth::{synth_generate, JointTable, SynthMeta, SynthOutput, SynthSpec};

/// Dense `n x d` matrix of final-layer embeddings, one row per sample.
///
/// Every value is finite and both dimensions are at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "embedding matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(Self { values })
    }

    pub fn from_rows(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((n, d), data)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_array(self) -> Array2<f64> {
        self.values
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
        }
    }
}

/// Integer class ids in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    values: Vec<usize>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
}

impl LabelVector {
    pub fn new(values: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Validation(format!(
                "a label vector needs at least 2 classes, got {num_classes}"
            )));
        }
        if let Some((row, &label)) = values.iter().enumerate().find(|(_, &v)| v >= num_classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label: label as i64,
                num_classes,
            });
        }
        Ok(Self {
            values,
            num_classes,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            values: rows.iter().map(|&i| self.values[i]).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Per-class counts.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &v in &self.values {
            counts[v] += 1;
        }
        counts
    }

    /// Frequency of the most common class.
    pub fn majority_rate(&self) -> f64 {
        let max = self.counts().into_iter().max().unwrap_or(0);
        max as f64 / self.values.len().max(1) as f64
    }
}

/// Embeddings together with task labels, sensitive labels and optional ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub embeddings: EmbeddingMatrix,
    pub task: LabelVector,
    pub sensitive: LabelVector,
    pub ids: Option<Vec<String>>,
}

impl DatasetBundle {
    pub fn new(
        embeddings: EmbeddingMatrix,
        task: LabelVector,
        sensitive: LabelVector,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = embeddings.n();
        if task.len() != n || sensitive.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} embedding rows, {} task labels, {} sensitive labels",
                task.len(),
                sensitive.len()
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{n} embedding rows but {} ids",
                    ids.len()
                )));
            }
        }
        Ok(Self {
            embeddings,
            task,
            sensitive,
            ids,
        })
    }

    pub fn n(&self) -> usize {
        self.embeddings.n()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            embeddings: self.embeddings.select_rows(rows),
            task: self.task.select(rows),
            sensitive: self.sensitive.select(rows),
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&i| ids[i].clone()).collect()),
        }
    }
}

/// File names used by [`save_bundle`] inside a bundle directory.
pub const EMBEDDINGS_FILE: &str = "embeddings.emb1";
pub const TASK_LABELS_FILE: &str = "task.csv";
pub const SENSITIVE_LABELS_FILE: &str = "sensitive.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundlePaths {
    pub embeddings: PathBuf,
    pub task_labels: PathBuf,
    pub sensitive_labels: PathBuf,
}

impl BundlePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            embeddings: dir.join(EMBEDDINGS_FILE),
            task_labels: dir.join(TASK_LABELS_FILE),
            sensitive_labels: dir.join(SENSITIVE_LABELS_FILE),
        }
    }
}

/// Loads and validates a bundle from an EMB1 file and two label CSVs.
///
/// Row ids come from the task label file; the sensitive file must list the
/// same ids in the same order.
pub fn load_bundle(
    embeddings_path: &Path,
    task_labels_path: &Path,
    sensitive_labels_path: &Path,
) -> Result<DatasetBundle> {
    let embeddings = read_emb1(embeddings_path)?;
    let (task_ids, task) = read_labels(task_labels_path)?;
    let (sens_ids, sensitive) = read_labels(sensitive_labels_path)?;
    if task_ids != sens_ids && task.len() == sensitive.len() {
        return Err(Error::Validation(format!(
            "row ids differ between {} and {}",
            task_labels_path.display(),
            sensitive_labels_path.display()
        )));
    }
    DatasetBundle::new(embeddings, task, sensitive, task_ids)
}

pub fn load_bundle_dir(dir: &Path) -> Result<DatasetBundle> {
    let paths = BundlePaths::in_dir(dir);
    load_bundle(&paths.embeddings, &paths.task_labels, &paths.sensitive_labels)
}

/// Writes a bundle into `dir` (created if needed) and returns the file paths.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<BundlePaths> {
    if bundle.n() == 0 {
        return Err(Error::Validation("cannot save an empty bundle".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = BundlePaths::in_dir(dir);
    write_emb1(&paths.embeddings, bundle.embeddings.view())?;
    write_labels(&paths.task_labels, bundle.ids.as_deref(), &bundle.task)?;
    write_labels(&paths.sensitive_labels, bundle.ids.as_deref(), &bundle.sensitive)?;
    Ok(paths)
}
