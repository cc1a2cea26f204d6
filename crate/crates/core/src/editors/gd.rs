//! The plain editor: gradient descent on every trainable backbone tensor
//! until the target prediction flips (or the budget runs out).

use std::time::Instant;

use super::{EditConfig, EditError, EditOutcome};
use crate::eval::accuracy;
use crate::graph::{CsrGraph, Dataset};
use crate::linalg::{adam_step, argmax, masked_cross_entropy, AdamHyper, AdamState};
use crate::models::{backward_from_dlogits, forward, ModelConfig, ModelError};
use crate::params::ParameterSet;

/// Edit `params` in place so that `target` is predicted as `desired`.
///
/// Each step runs a full-graph eval-mode forward, takes cross-entropy on the
/// single target node, and applies one Adam update to all trainable tensors.
/// An already-correct target is a zero-step success. Wall time covers the
/// edit loop only, not the before/after test evaluations.
pub fn gd_edit(
    config: &ModelConfig,
    params: &mut ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    target: usize,
    desired: usize,
    edit: &EditConfig,
) -> Result<EditOutcome, EditError> {
    edit.validate()?;
    let graph_ref = config.arch.needs_graph().then_some(graph);
    let mut labels = dataset.labels.clone();
    if desired >= dataset.n_classes {
        return Err(EditError::Model(ModelError::InvalidConfig(format!(
            "desired label {desired} out of range"
        ))));
    }
    labels[target] = desired;

    let (logits, _) = forward(config, params, graph_ref, &dataset.features, false, 0)?;
    let acc_before = accuracy(&logits, &dataset.labels, &dataset.splits.test)?;

    let mut state = AdamState::new(AdamHyper::with_lr(edit.lr), params);
    let mut steps = 0usize;
    let start = Instant::now();
    let success = loop {
        let (logits, cache) = forward(config, params, graph_ref, &dataset.features, false, 0)?;
        if argmax(logits.row(target)) == desired {
            break true;
        }
        if steps == edit.budget {
            break false;
        }
        let (loss, dlogits) = masked_cross_entropy(&logits, &labels, &[target])?;
        if !loss.is_finite() {
            return Err(EditError::NonFiniteLoss { step: steps });
        }
        let grads = backward_from_dlogits(config, params, graph_ref, &cache, dlogits)?;
        adam_step(params, &grads, &mut state)?;
        steps += 1;
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;

    let (logits, _) = forward(config, params, graph_ref, &dataset.features, false, 0)?;
    let acc_after = accuracy(&logits, &dataset.labels, &dataset.splits.test)?;
    Ok(EditOutcome {
        node: target,
        success,
        steps,
        ms,
        acc_before,
        acc_after,
        dd: acc_before - acc_after,
    })
}
