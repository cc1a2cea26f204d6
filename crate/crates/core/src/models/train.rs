//! Full-batch inductive training: optimize on the train-node induced
//! subgraph, evaluate every epoch on the full graph, keep the
//! best-validation-accuracy parameters.

use serde::Serialize;

use super::{forward, init_params, loss_and_grads, ModelConfig, ModelError};
use crate::eval::accuracy;
use crate::graph::{induced_subgraph, CsrGraph, Dataset};
use crate::linalg::{adam_step, AdamHyper, AdamState};
use crate::params::ParameterSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ParameterSet,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept (highest validation accuracy,
    /// earliest on ties). `None` when trained for zero epochs.
    pub best_epoch: Option<usize>,
    pub best_val_acc: f64,
    pub test_acc_at_best: f64,
}

/// Deterministic per seed: initialization comes from `config.seed`, the
/// per-epoch dropout streams from `hyper.seed`.
pub fn train_full_batch(
    config: &ModelConfig,
    graph: &CsrGraph,
    dataset: &Dataset,
    hyper: &TrainHyper,
) -> Result<TrainResult, ModelError> {
    config.validate()?;
    dataset.validate()?;
    if dataset.splits.train.is_empty() {
        return Err(ModelError::InvalidConfig("empty train mask".into()));
    }

    let (sub_graph, _) = induced_subgraph(graph, &dataset.splits.train)?;
    let sub_dataset = dataset.induce(&dataset.splits.train);
    let sub_mask: Vec<usize> = (0..sub_dataset.node_count()).collect();
    let sub_graph_ref = config.arch.needs_graph().then_some(&sub_graph);
    let full_graph_ref = config.arch.needs_graph().then_some(graph);

    let mut params = init_params(config, dataset.feature_dim(), dataset.n_classes)?;
    let mut state = AdamState::new(AdamHyper::with_lr(hyper.lr), &params);
    let mut seeds = ChaCha8Rng::seed_from_u64(hyper.seed);

    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(usize, f64, f64, ParameterSet)> = None;
    for epoch in 0..hyper.epochs {
        let dropout_seed: u64 = seeds.gen();
        let (loss, grads) = loss_and_grads(
            config,
            &params,
            sub_graph_ref,
            &sub_dataset,
            &sub_mask,
            true,
            dropout_seed,
        )?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss });
        }
        adam_step(&mut params, &grads, &mut state)?;

        let (logits, _) = forward(
            config,
            &params,
            full_graph_ref,
            &dataset.features,
            false,
            0,
        )?;
        let val_acc = if dataset.splits.val.is_empty() {
            0.0
        } else {
            accuracy(&logits, &dataset.labels, &dataset.splits.val)?
        };
        let test_acc = if dataset.splits.test.is_empty() {
            0.0
        } else {
            accuracy(&logits, &dataset.labels, &dataset.splits.test)?
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss,
            val_acc,
            test_acc,
        });
        let improved = best.as_ref().map_or(true, |(_, v, _, _)| val_acc > *v);
        if improved {
            best = Some((epoch, val_acc, test_acc, params.clone()));
        }
    }

    Ok(match best {
        Some((epoch, val, test, snapshot)) => TrainResult {
            params: snapshot,
            history,
            best_epoch: Some(epoch),
            best_val_acc: val,
            test_acc_at_best: test,
        },
        None => TrainResult {
            params,
            history,
            best_epoch: None,
            best_val_acc: 0.0,
            test_acc_at_best: 0.0,
        },
    })
}
