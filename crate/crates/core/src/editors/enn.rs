//! Editability preparation for the backbone: a documented one-inner-step
//! simplification of meta-learned editing. Each outer step samples a train
//! node, simulates one plain gradient step of an edit toward its label, and
//! optimizes train cross-entropy plus the post-inner-step cross-entropy on
//! the sampled node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EditConfig, EditError};
use crate::graph::{induced_subgraph, CsrGraph, Dataset};
use crate::linalg::{adam_step, AdamHyper, AdamState};
use crate::models::{loss_and_grads, ModelConfig};
use crate::params::ParameterSet;

/// Run `edit.prepare_steps` outer steps in place. `T = 0` leaves the
/// parameters untouched. Deterministic per `edit.seed`.
pub fn enn_prepare(
    config: &ModelConfig,
    params: &mut ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    edit: &EditConfig,
) -> Result<(), EditError> {
    edit.validate()?;
    if edit.prepare_steps == 0 {
        return Ok(());
    }
    let (sub_graph, _) = induced_subgraph(graph, &dataset.splits.train)?;
    let sub_dataset = dataset.induce(&dataset.splits.train);
    let sub_mask: Vec<usize> = (0..sub_dataset.node_count()).collect();
    let graph_ref = config.arch.needs_graph().then_some(&sub_graph);

    let mut rng = ChaCha8Rng::seed_from_u64(edit.seed);
    let mut state = AdamState::new(AdamHyper::with_lr(edit.lr), params);
    for step in 0..edit.prepare_steps {
        let v = rng.gen_range(0..sub_dataset.node_count());
        let (train_loss, mut outer) =
            loss_and_grads(config, params, graph_ref, &sub_dataset, &sub_mask, false, 0)?;
        if !train_loss.is_finite() {
            return Err(EditError::NonFiniteLoss { step });
        }

        // One simulated edit step on the sampled node (plain SGD), then the
        // editability term evaluated at the stepped parameters.
        let (_, inner) =
            loss_and_grads(config, params, graph_ref, &sub_dataset, &[v], false, 0)?;
        let mut stepped = params.clone();
        for p in stepped.trainable_mut() {
            if let Some(g) = inner.get(&p.name) {
                p.tensor.add_scaled(g, -edit.lr);
            }
        }
        let (post_loss, post) =
            loss_and_grads(config, &stepped, graph_ref, &sub_dataset, &[v], false, 0)?;
        if !post_loss.is_finite() {
            return Err(EditError::NonFiniteLoss { step });
        }
        outer.add_scaled(&post, 1.0);
        adam_step(params, &outer, &mut state)?;
    }
    Ok(())
}
