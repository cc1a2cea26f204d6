//! The stitched-MLP editor: preparation trains the MLP against task loss
//! plus alpha-weighted KL locality to the frozen predictions; edits update
//! only the MLP. Neither phase touches the graph after the frozen logits
//! cache is built.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EditConfig, EditError, EditOutcome};
use crate::eval::accuracy;
use crate::graph::{CsrGraph, Dataset};
use crate::linalg::{
    adam_step, argmax, log_softmax_rows, masked_cross_entropy, AdamHyper, AdamState, DenseMatrix,
};
use crate::models::{
    backward_from_dlogits, egnn_forward, forward, EgnnModel, ModelConfig, ModelError,
};
use crate::params::ParameterSet;

/// Composite accuracy on a node subset, evaluated propagation-free.
pub fn composed_accuracy(
    model: &EgnnModel,
    dataset: &Dataset,
    mask: &[usize],
) -> Result<f64, EditError> {
    let logits = egnn_forward(model, &dataset.features, mask)?;
    let labels: Vec<usize> = mask.iter().map(|&i| dataset.labels[i]).collect();
    let rows: Vec<usize> = (0..mask.len()).collect();
    Ok(accuracy(&logits, &labels, &rows)?)
}

/// Gradient of `KL(softmax(z) || softmax(h))` with respect to `z`, both
/// single rows; `ref_log_probs` is the log-softmax of `h`.
fn kl_value_and_grad(z: &DenseMatrix, ref_log_probs: &[f64]) -> Result<(f64, DenseMatrix), EditError> {
    let lp = log_softmax_rows(z)?;
    let mut kl = 0.0;
    let c = z.cols();
    let mut p = vec![0.0; c];
    for k in 0..c {
        p[k] = lp[(0, k)].exp();
        kl += p[k] * (lp[(0, k)] - ref_log_probs[k]);
    }
    let mut grad = DenseMatrix::zeros(1, c);
    for k in 0..c {
        grad[(0, k)] = p[k] * ((lp[(0, k)] - ref_log_probs[k]) - kl);
    }
    Ok((kl, grad))
}

/// Stitch an MLP onto the trained backbone and train it for
/// `edit.prepare_steps` single-node steps over the train mask, minimizing
/// task cross-entropy plus `edit.alpha` times the KL locality loss. The
/// backbone tensors are byte-identical afterwards.
pub fn egnn_prepare(
    gnn_config: &ModelConfig,
    gnn_params: &ParameterSet,
    graph: &CsrGraph,
    dataset: &Dataset,
    mlp_config: &ModelConfig,
    edit: &EditConfig,
) -> Result<EgnnModel, EditError> {
    edit.validate()?;
    let mut model = EgnnModel::stitch(
        *gnn_config,
        gnn_params.clone(),
        graph,
        &dataset.features,
        *mlp_config,
        edit.alpha,
    )?;
    if edit.prepare_steps == 0 || dataset.splits.train.is_empty() {
        return Ok(model);
    }

    let ref_log_probs = log_softmax_rows(&model.frozen_logits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(edit.seed);
    let mut state = AdamState::new(AdamHyper::with_lr(edit.lr), &model.mlp_params);
    for step in 0..edit.prepare_steps {
        let v = dataset.splits.train[rng.gen_range(0..dataset.splits.train.len())];
        let x_row = dataset.features.select_rows(&[v]);
        let (delta, cache) = forward(&model.mlp_config, &model.mlp_params, None, &x_row, false, 0)?;
        let mut z = model.frozen_logits.select_rows(&[v]);
        z.add_scaled(&delta, 1.0);

        let (task_loss, mut dz) = masked_cross_entropy(&z, &[dataset.labels[v]], &[0])?;
        let (kl, dz_kl) = kl_value_and_grad(&z, ref_log_probs.row(v))?;
        dz.add_scaled(&dz_kl, edit.alpha);
        let loss = task_loss + edit.alpha * kl;
        if !loss.is_finite() {
            return Err(EditError::NonFiniteLoss { step });
        }
        let grads =
            backward_from_dlogits(&model.mlp_config, &model.mlp_params, None, &cache, dz)?;
        adam_step(&mut model.mlp_params, &grads, &mut state)?;
    }
    Ok(model)
}

/// Correct `target` to `desired` by updating only the stitched MLP. Requires
/// no graph access; per-step cost is independent of the graph size.
pub fn egnn_edit(
    model: &mut EgnnModel,
    dataset: &Dataset,
    target: usize,
    desired: usize,
    edit: &EditConfig,
) -> Result<EditOutcome, EditError> {
    edit.validate()?;
    if target >= model.node_count() {
        return Err(EditError::Model(ModelError::NodeOutsideCache {
            node: target,
            rows: model.node_count(),
        }));
    }
    let acc_before = composed_accuracy(model, dataset, &dataset.splits.test)?;

    let x_row = dataset.features.select_rows(&[target]);
    let h_row = model.frozen_logits.select_rows(&[target]);
    let mut state = AdamState::new(AdamHyper::with_lr(edit.lr), &model.mlp_params);
    let mut steps = 0usize;
    let start = Instant::now();
    let success = loop {
        let (delta, cache) = forward(&model.mlp_config, &model.mlp_params, None, &x_row, false, 0)?;
        let mut z = h_row.clone();
        z.add_scaled(&delta, 1.0);
        if argmax(z.row(0)) == desired {
            break true;
        }
        if steps == edit.budget {
            break false;
        }
        let (loss, dz) = masked_cross_entropy(&z, &[desired], &[0])?;
        if !loss.is_finite() {
            return Err(EditError::NonFiniteLoss { step: steps });
        }
        let grads =
            backward_from_dlogits(&model.mlp_config, &model.mlp_params, None, &cache, dz)?;
        adam_step(&mut model.mlp_params, &grads, &mut state)?;
        steps += 1;
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;

    let acc_after = composed_accuracy(model, dataset, &dataset.splits.test)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, make_splits, SbmConfig};
    use crate::models::{train_full_batch, Architecture, TrainHyper};

    fn trained_fixture() -> (CsrGraph, Dataset, ModelConfig, ParameterSet) {
        let cfg = SbmConfig {
            blocks: 2,
            block_size: 40,
            p_in: 0.2,
            p_out: 0.03,
            dim: 6,
            separation: 1.0,
            noise: 0.9,
            seed: 8,
        };
        let (g, mut ds) = generate_sbm(&cfg).unwrap();
        ds.splits = make_splits(ds.node_count(), (0.6, 0.2, 0.2), 8).unwrap();
        let mc = ModelConfig {
            arch: Architecture::Gcn,
            layers: 2,
            hidden: 8,
            dropout: 0.0,
            seed: 4,
        };
        let hyper = TrainHyper {
            lr: 0.01,
            epochs: 60,
            seed: 4,
        };
        let result = train_full_batch(&mc, &g, &ds, &hyper).unwrap();
        (g, ds, mc, result.params)
    }

    fn mlp_config() -> ModelConfig {
        ModelConfig {
            arch: Architecture::Mlp,
            layers: 2,
            hidden: 8,
            dropout: 0.0,
            seed: 77,
        }
    }

    #[test]
    fn zero_prepare_steps_preserves_frozen_predictions_exactly() {
        let (g, ds, mc, params) = trained_fixture();
        let edit = EditConfig {
            prepare_steps: 0,
            ..EditConfig::default()
        };
        let model = egnn_prepare(&mc, &params, &g, &ds, &mlp_config(), &edit).unwrap();
        let all: Vec<usize> = (0..ds.node_count()).collect();
        let composed = egnn_forward(&model, &ds.features, &all).unwrap();
        assert_eq!(composed, model.frozen_logits);
    }

    #[test]
    fn huge_alpha_keeps_predictions_pinned() {
        let (g, ds, mc, params) = trained_fixture();
        let edit = EditConfig {
            alpha: 1e6,
            prepare_steps: 300,
            seed: 5,
            ..EditConfig::default()
        };
        let model = egnn_prepare(&mc, &params, &g, &ds, &mlp_config(), &edit).unwrap();
        let all: Vec<usize> = (0..ds.node_count()).collect();
        let composed = egnn_forward(&model, &ds.features, &all).unwrap();
        let matches = (0..ds.node_count())
            .filter(|&i| argmax(composed.row(i)) == argmax(model.frozen_logits.row(i)))
            .count();
        assert!(
            matches as f64 >= 0.99 * ds.node_count() as f64,
            "only {matches}/{} predictions preserved",
            ds.node_count()
        );
    }

    #[test]
    fn prepared_accuracy_stays_close_to_frozen() {
        let (g, ds, mc, params) = trained_fixture();
        let edit = EditConfig {
            prepare_steps: 500,
            seed: 5,
            ..EditConfig::default()
        };
        let model = egnn_prepare(&mc, &params, &g, &ds, &mlp_config(), &edit).unwrap();
        let (frozen_logits, _) =
            forward(&mc, &params, Some(&g), &ds.features, false, 0).unwrap();
        let frozen_acc = accuracy(&frozen_logits, &ds.labels, &ds.splits.test).unwrap();
        let composed_acc = composed_accuracy(&model, &ds, &ds.splits.test).unwrap();
        assert!(
            (frozen_acc - composed_acc).abs() <= 0.02 + 1e-12,
            "frozen {frozen_acc} vs composed {composed_acc}"
        );
    }

    #[test]
    fn edit_succeeds_and_leaves_backbone_bytes_untouched() {
        let (g, ds, mc, params) = trained_fixture();
        let edit = EditConfig {
            prepare_steps: 200,
            seed: 3,
            ..EditConfig::default()
        };
        let mut model = egnn_prepare(&mc, &params, &g, &ds, &mlp_config(), &edit).unwrap();
        let frozen_bytes = model.gnn_params.byte_snapshot();
        let cache_bytes = model.frozen_logits.to_le_bytes();

        let all_val = &ds.splits.val;
        let composed = egnn_forward(&model, &ds.features, all_val).unwrap();
        let target_pos = (0..all_val.len())
            .find(|&k| argmax(composed.row(k)) != ds.labels[all_val[k]])
            .expect("some misclassified val node");
        let target = all_val[target_pos];

        let out = egnn_edit(&mut model, &ds, target, ds.labels[target], &edit).unwrap();
        assert!(out.success);
        assert!(out.steps >= 1);
        let z = egnn_forward(&model, &ds.features, &[target]).unwrap();
        assert_eq!(argmax(z.row(0)), ds.labels[target]);
        assert_eq!(model.gnn_params.byte_snapshot(), frozen_bytes);
        assert_eq!(model.frozen_logits.to_le_bytes(), cache_bytes);
    }

    #[test]
    fn already_correct_composite_target_is_noop() {
        let (g, ds, mc, params) = trained_fixture();
        let edit = EditConfig::default();
        let mut model = egnn_prepare(&mc, &params, &g, &ds, &mlp_config(), &edit).unwrap();
        let composed = egnn_forward(&model, &ds.features, &ds.splits.val).unwrap();
        let pos = (0..ds.splits.val.len())
            .find(|&k| argmax(composed.row(k)) == ds.labels[ds.splits.val[k]])
            .unwrap();
        let node = ds.splits.val[pos];
        let before = model.mlp_params.byte_snapshot();
        let out = egnn_edit(&mut model, &ds, node, ds.labels[node], &edit).unwrap();
        assert!(out.success);
        assert_eq!(out.steps, 0);
        assert_eq!(out.dd, 0.0);
        assert_eq!(model.mlp_params.byte_snapshot(), before);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        // Check the hand-derived KL-through-softmax gradient on a small row.
        let z: DenseMatrix = DenseMatrix::from_rows(&[vec![0.3, -0.7, 1.1]]);
        let href: DenseMatrix = DenseMatrix::from_rows(&[vec![0.5, 0.1, -0.2]]);
        let ref_lp = log_softmax_rows(&href).unwrap();
        let (_, grad) = kl_value_and_grad(&z, ref_lp.row(0)).unwrap();
        for k in 0..3 {
            let eps = 1e-6;
            let mut zp = z.clone();
            zp[(0, k)] += eps;
            let (kp, _) = kl_value_and_grad(&zp, ref_lp.row(0)).unwrap();
            let mut zm = z.clone();
            zm[(0, k)] -= eps;
            let (km, _) = kl_value_and_grad(&zm, ref_lp.row(0)).unwrap();
            let fd = (kp - km) / (2.0 * eps);
            assert!(
                (grad[(0, k)] - fd).abs() < 1e-8,
                "entry {k}: analytic {} vs fd {fd}",
                grad[(0, k)]
            );
        }
    }
}
