//! Post-hoc debiasing of classifier embeddings.
//!
//! The embedding matrix is factored into orthogonal concepts with a truncated
//! SVD, each concept is scored by its total Sobol index for a task head and a
//! sensitive-attribute head, and the concepts that carry the most sensitive
//! information per unit of task information are removed before retraining.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod decomposition;
pub mod error;
pub mod heads;
mod linalg;
pub mod occlusion;
pub mod pipeline;
pub mod ranking;
pub mod sobol;
pub mod text;

pub use error::{Error, ErrorKind, Result};
pub use linalg::orthonormality_error;
