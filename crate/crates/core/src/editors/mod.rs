//! Model editors: plain gradient descent on the backbone, the
//! prepared-for-editing variant, and the stitched-MLP editor, plus the
//! single/sequential edit experiment drivers.

mod egnn;
mod enn;
mod experiment;
mod gd;

pub use egnn::{composed_accuracy, egnn_edit, egnn_prepare};
pub use enn::enn_prepare;
pub use experiment::{
    sequential_edit_experiment, single_edit_experiment, EditorKind, SeqStep, SeqTrace,
};
pub use gd::gd_edit;

use serde::Serialize;
use thiserror::Error;

use crate::graph::GraphError;
use crate::linalg::LinalgError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum EditError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edit produced a non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid edit config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EditConfig {
    /// Adam learning rate used inside edit loops and preparation.
    pub lr: f64,
    /// Maximum optimizer steps per edit before declaring failure.
    pub budget: usize,
    /// Locality-loss weight for stitched-MLP preparation.
    pub alpha: f64,
    /// Preparation steps (outer steps for the prepared editor, MLP training
    /// steps for the stitched editor).
    pub prepare_steps: usize,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            budget: 100,
            alpha: 0.1,
            prepare_steps: 500,
            seed: 0,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<(), EditError> {
        if self.budget == 0 {
            return Err(EditError::InvalidConfig("budget must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(EditError::InvalidConfig("edit lr must be > 0".into()));
        }
        if self.alpha < 0.0 {
            return Err(EditError::InvalidConfig("alpha must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EditOutcome {
    pub node: usize,
    pub success: bool,
    pub steps: usize,
    /// Wall time of the edit loop, milliseconds. Excluded from determinism
    /// comparisons.
    pub ms: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    /// Signed drawdown `acc_before - acc_after`.
    pub dd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EditReport {
    pub editor: String,
    pub dataset: String,
    pub seed: u64,
    pub n_edits: usize,
    /// Success rate; `null` when no edits ran.
    pub sr: Option<f64>,
    pub mean_dd: f64,
    pub std_dd: f64,
    pub mean_acc_before: f64,
    pub mean_acc_after: f64,
    pub mean_edit_ms: f64,
    pub mean_abs_dd: f64,
    pub std_acc_after: f64,
    pub std_edit_ms: f64,
    /// True when the experiment found no misclassified validation node.
    pub skipped: bool,
    pub outcomes: Vec<EditOutcome>,
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n == 0 {
        return 0.0;
    }
    let m = mean(values.clone());
    (values.map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt()
}

impl EditReport {
    pub fn from_outcomes(
        editor: &str,
        dataset: &str,
        seed: u64,
        outcomes: Vec<EditOutcome>,
        skipped: bool,
    ) -> Self {
        let n = outcomes.len();
        let sr = (n > 0)
            .then(|| outcomes.iter().filter(|o| o.success).count() as f64 / n as f64);
        let dd = outcomes.iter().map(|o| o.dd);
        let acc_after = outcomes.iter().map(|o| o.acc_after);
        let ms = outcomes.iter().map(|o| o.ms);
        Self {
            editor: editor.to_string(),
            dataset: dataset.to_string(),
            seed,
            n_edits: n,
            sr,
            mean_dd: mean(dd.clone()),
            std_dd: std_dev(dd.clone()),
            mean_acc_before: mean(outcomes.iter().map(|o| o.acc_before)),
            mean_acc_after: mean(acc_after.clone()),
            mean_edit_ms: mean(ms.clone()),
            mean_abs_dd: mean(dd.map(f64::abs)),
            std_acc_after: std_dev(acc_after),
            std_edit_ms: std_dev(ms),
            skipped,
            outcomes,
        }
    }
}
