//! Metrics and the measurement experiments built on them.

mod generalize;
mod landscape;

pub use generalize::{
    generalization_experiment, GeneralizationConfig, GeneralizationRecord, GeneralizationReport,
};
pub use landscape::{landscape_scan, write_landscape_csv, LandscapeGrid};

use thiserror::Error;

use crate::linalg::{argmax, DenseMatrix, LinalgError};
use crate::models::ModelError;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Edit(#[from] crate::editors::EditError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// Fraction of masked nodes whose argmax matches the label. Argmax ties
/// break toward the lowest class index.
pub fn accuracy<T: Scalar>(
    logits: &DenseMatrix<T>,
    labels: &[usize],
    mask: &[usize],
) -> Result<f64, LinalgError> {
    if mask.is_empty() {
        return Err(LinalgError::EmptyMask { op: "accuracy" });
    }
    let mut hits = 0usize;
    for &i in mask {
        if i >= logits.rows() {
            return Err(LinalgError::IndexOutOfRange {
                op: "accuracy",
                index: i,
                rows: logits.rows(),
            });
        }
        if argmax(logits.row(i)) == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / mask.len() as f64)
}
