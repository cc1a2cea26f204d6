//! Edit experiment drivers: independent single edits from fresh model
//! copies, and cumulative sequential editing of one evolving model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    composed_accuracy, egnn_edit, egnn_prepare, enn_prepare, gd_edit, EditConfig, EditError,
    EditOutcome, EditReport,
};
use crate::eval::accuracy;
use crate::graph::{CsrGraph, Dataset};
use crate::linalg::argmax;
use crate::models::{egnn_forward, forward, EgnnModel, ModelConfig};
use crate::params::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EditorKind {
    Gd,
    Enn,
    Egnn,
}

impl EditorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EditorKind::Gd => "gd",
            EditorKind::Enn => "enn",
            EditorKind::Egnn => "egnn",
        }
    }
}

impl std::str::FromStr for EditorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gd" => Ok(Self::Gd),
            "enn" => Ok(Self::Enn),
            "egnn" => Ok(Self::Egnn),
            other => Err(format!("unknown editor {other:?}")),
        }
    }
}

impl std::fmt::Display for EditorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The model state an experiment hands to each edit.
#[derive(Debug, Clone)]
enum Prepared {
    Gnn(ParameterSet),
    Egnn(Box<EgnnModel>),
}

impl Prepared {
    fn misclassified(
        &self,
        config: &ModelConfig,
        graph: &CsrGraph,
        dataset: &Dataset,
        mask: &[usize],
    ) -> Result<Vec<usize>, EditError> {
        match self {
            Prepared::Gnn(params) => {
                let graph_ref = config.arch.needs_graph().then_some(graph);
                let (logits, _) = forward(config, params, graph_ref, &dataset.features, false, 0)?;
                Ok(mask
                    .iter()
                    .copied()
                    .filter(|&v| argmax(logits.row(v)) != dataset.labels[v])
                    .collect())
            }
            Prepared::Egnn(model) => {
                let logits = egnn_forward(model, &dataset.features, mask)?;
                Ok(mask
                    .iter()
                    .enumerate()
                    .filter(|&(k, &v)| argmax(logits.row(k)) != dataset.labels[v])
                    .map(|(_, &v)| v)
                    .collect())
            }
        }
    }

    fn test_accuracy(
        &self,
        config: &ModelConfig,
        graph: &CsrGraph,
        dataset: &Dataset,
    ) -> Result<f64, EditError> {
        match self {
            Prepared::Gnn(params) => {
                let graph_ref = config.arch.needs_graph().then_some(graph);
                let (logits, _) = forward(config, params, graph_ref, &dataset.features, false, 0)?;
                Ok(accuracy(&logits, &dataset.labels, &dataset.splits.test)?)
            }
            Prepared::Egnn(model) => composed_accuracy(model, dataset, &dataset.splits.test),
        }
    }

    fn edit(
        &mut self,
        config: &ModelConfig,
        graph: &CsrGraph,
        dataset: &Dataset,
        target: usize,
        desired: usize,
        edit: &EditConfig,
    ) -> Result<EditOutcome, EditError> {
        match self {
            Prepared::Gnn(params) => gd_edit(config, params, graph, dataset, target, desired, edit),
            Prepared::Egnn(model) => egnn_edit(model, dataset, target, desired, edit),
        }
    }
}

fn prepare(
    editor: EditorKind,
    config: &ModelConfig,
    trained: &ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    mlp_config: &ModelConfig,
    edit: &EditConfig,
) -> Result<Prepared, EditError> {
    Ok(match editor {
        EditorKind::Gd => Prepared::Gnn(trained.clone()),
        EditorKind::Enn => {
            let mut params = trained.clone();
            enn_prepare(config, &mut params, graph, dataset, edit)?;
            Prepared::Gnn(params)
        }
        EditorKind::Egnn => Prepared::Egnn(Box::new(egnn_prepare(
            config, trained, graph, dataset, mlp_config, edit,
        )?)),
    })
}

/// Up to `n_edits` independent edits of seeded-sampled misclassified
/// validation nodes, each from a fresh copy of the trained/prepared model,
/// with the ground-truth label as the target.
#[allow(clippy::too_many_arguments)]
pub fn single_edit_experiment(
    editor: EditorKind,
    config: &ModelConfig,
    trained: &ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    mlp_config: &ModelConfig,
    n_edits: usize,
    edit: &EditConfig,
    dataset_label: &str,
) -> Result<EditReport, EditError> {
    edit.validate()?;
    let base = prepare(editor, config, trained, graph, dataset, mlp_config, edit)?;
    let mut candidates = base.misclassified(config, graph, dataset, &dataset.splits.val)?;
    let skipped = candidates.is_empty() && n_edits > 0;
    let mut rng = ChaCha8Rng::seed_from_u64(edit.seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(n_edits);

    let mut outcomes = Vec::with_capacity(candidates.len());
    for &target in &candidates {
        let mut copy = base.clone();
        let outcome = copy.edit(config, graph, dataset, target, dataset.labels[target], edit)?;
        outcomes.push(outcome);
    }
    Ok(EditReport::from_outcomes(
        editor.as_str(),
        dataset_label,
        edit.seed,
        outcomes,
        skipped,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeqStep {
    pub index: usize,
    pub node: usize,
    pub success: bool,
    pub steps: usize,
    /// Wall time of the edit loop, milliseconds (non-deterministic field).
    pub ms: f64,
    pub acc_after: f64,
    /// Baseline accuracy minus accuracy after this edit.
    pub dd_from_baseline: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeqTrace {
    pub editor: String,
    pub dataset: String,
    pub seed: u64,
    pub n_edits: usize,
    /// Test accuracy of the prepared model before any edit.
    pub baseline_acc: f64,
    pub steps: Vec<SeqStep>,
}

/// Cumulative editing: one evolving model, each step fixing a currently
/// misclassified validation node (seeded choice). Stops early when nothing
/// on the validation set is misclassified.
#[allow(clippy::too_many_arguments)]
pub fn sequential_edit_experiment(
    editor: EditorKind,
    config: &ModelConfig,
    trained: &ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    mlp_config: &ModelConfig,
    n_edits: usize,
    edit: &EditConfig,
    dataset_label: &str,
) -> Result<SeqTrace, EditError> {
    edit.validate()?;
    let mut state = prepare(editor, config, trained, graph, dataset, mlp_config, edit)?;
    let baseline_acc = state.test_accuracy(config, graph, dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(edit.seed);

    let mut steps = Vec::with_capacity(n_edits);
    for index in 0..n_edits {
        let mut candidates = state.misclassified(config, graph, dataset, &dataset.splits.val)?;
        if candidates.is_empty() {
            break;
        }
        candidates.shuffle(&mut rng);
        let target = candidates[0];
        let outcome = state.edit(config, graph, dataset, target, dataset.labels[target], edit)?;
        steps.push(SeqStep {
            index,
            node: outcome.node,
            success: outcome.success,
            steps: outcome.steps,
            ms: outcome.ms,
            acc_after: outcome.acc_after,
            dd_from_baseline: baseline_acc - outcome.acc_after,
        });
    }
    Ok(SeqTrace {
        editor: editor.as_str().to_string(),
        dataset: dataset_label.to_string(),
        seed: edit.seed,
        n_edits: steps.len(),
        baseline_acc,
        steps,
    })
}
