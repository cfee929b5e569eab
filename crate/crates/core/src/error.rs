use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes of failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes in {path}: expected EMB1, found {found:?}")]
    MagicMismatch { path: PathBuf, found: [u8; 4] },
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {num_classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: i64,
        num_classes: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("requested rank {requested} exceeds min(n, d) = {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("SVD did not converge after {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("singular value {index} ({value:e}) underflows relative to the largest")]
    SingularValueUnderflow { index: usize, value: f64 },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("removal plan would delete all {0} concepts")]
    RemoveAll(usize),
    #[error("training diverged for every learning rate in the grid")]
    DivergenceDetected,
    #[error("invalid sample count {0}: the Sobol generator needs a power of two")]
    InvalidN(usize),
    #[error("model output has zero variance on every evaluation row")]
    ZeroVariance,
    #[error("importance pairs do not cover concepts 0..{expected}")]
    IncompletePairs { expected: usize },
    #[error("both importances are zero; the angle is undefined")]
    BothZero,
    #[error("artifact directory is missing stage `{0}`")]
    MissingStage(String),
    #[error("sweep aborted at k={k}: {source}")]
    SweepAborted {
        k: usize,
        partial: Box<crate::ranking::SweepReport>,
        source: Box<Error>,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("{0}")]
    Validation(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } => ErrorKind::Io,
            Error::MagicMismatch { .. } | Error::UnsupportedVersion(_) | Error::Malformed { .. } => {
                ErrorKind::Io
            }
            Error::ConvergenceFailure(_)
            | Error::SingularValueUnderflow { .. }
            | Error::DivergenceDetected
            | Error::ZeroVariance => ErrorKind::Numeric,
            Error::SweepAborted { source, .. } | Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }
}
