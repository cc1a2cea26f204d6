//! GCN, GraphSAGE, and MLP node classifiers with hand-derived backward
//! passes.
//!
//! Layer rule (GCN): `H' = relu(A_norm H W + b)`, with the final layer
//! emitting raw logits. GraphSAGE uses `relu(H W_root + mean_N(H) W_neigh +
//! b)` with a zero neighbor-mean for isolated nodes. Dropout hits each hidden
//! activation in train mode only (inverted scaling). Every gradient here is
//! gated against central finite differences in the test suite.

mod checkpoint;
mod egnn;
mod train;

pub use checkpoint::{
    load_checkpoint, load_egnn, load_model, save_checkpoint, save_egnn, save_model, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use egnn::{egnn_forward, EgnnModel};
pub use train::{train_full_batch, EpochStats, TrainHyper, TrainResult};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CsrGraph, Dataset, GraphError};
use crate::linalg::{masked_cross_entropy, DenseMatrix, LinalgError};
use crate::params::{GradSet, ParameterSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("a graph is required for the {0} architecture")]
    MissingGraph(&'static str),
    #[error("feature width {got} does not match expected input width {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("parameter {0:?} missing from the set")]
    MissingParam(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("node {node} outside the frozen logits cache ({rows} rows)")]
    NodeOutsideCache { node: usize, rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Sage,
    Mlp,
}

impl Architecture {
    pub fn needs_graph(self) -> bool {
        !matches!(self, Architecture::Mlp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Sage => "sage",
            Architecture::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "sage" => Ok(Self::Sage),
            "mlp" => Ok(Self::Mlp),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 {
            return Err(ModelError::InvalidConfig("layer count must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.layers > 1 && self.hidden == 0 {
            return Err(ModelError::InvalidConfig("hidden width must be >= 1".into()));
        }
        Ok(())
    }

    /// (in, out) widths per layer.
    pub fn layer_dims(&self, in_dim: usize, n_classes: usize) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let din = if l == 0 { in_dim } else { self.hidden };
                let dout = if l == self.layers - 1 {
                    n_classes
                } else {
                    self.hidden
                };
                (din, dout)
            })
            .collect()
    }
}

/// Seeded Glorot-uniform weights, zero biases, everything trainable.
pub fn init_params(
    config: &ModelConfig,
    in_dim: usize,
    n_classes: usize,
) -> Result<ParameterSet, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut glorot = |rows: usize, cols: usize| {
        let scale = (6.0 / (rows + cols) as f64).sqrt();
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
    };
    let mut params = ParameterSet::new();
    for (l, (din, dout)) in config.layer_dims(in_dim, n_classes).into_iter().enumerate() {
        match config.arch {
            Architecture::Gcn | Architecture::Mlp => {
                params.push(format!("layer{l}.weight"), glorot(din, dout), true);
            }
            Architecture::Sage => {
                params.push(format!("layer{l}.w_root"), glorot(din, dout), true);
                params.push(format!("layer{l}.w_neigh"), glorot(din, dout), true);
            }
        }
        params.push(format!("layer{l}.bias"), DenseMatrix::zeros(1, dout), true);
    }
    Ok(params)
}

/// Per-layer activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input each layer actually consumed (index 0 is the raw features).
    inputs: Vec<DenseMatrix>,
    /// Pre-activation outputs, one per layer.
    pre_activations: Vec<DenseMatrix>,
    /// Neighbor means per layer (GraphSAGE only).
    neighbor_means: Vec<Option<DenseMatrix>>,
    /// Inverted-dropout multipliers applied to hidden activation `l`.
    dropout_masks: Vec<Option<DenseMatrix>>,
}

fn tensor<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a DenseMatrix, ModelError> {
    params
        .get(name)
        .map(|p| &p.tensor)
        .ok_or_else(|| ModelError::MissingParam(name.to_string()))
}

/// Full forward pass. Eval mode (`train_mode = false`) is deterministic and
/// ignores `seed`; train mode draws one dropout mask per hidden activation
/// from a ChaCha stream seeded with `seed`.
pub fn forward(
    config: &ModelConfig,
    params: &ParameterSet,
    graph: Option<&CsrGraph>,
    x: &DenseMatrix,
    train_mode: bool,
    seed: u64,
) -> Result<(DenseMatrix, ForwardCache), ModelError> {
    config.validate()?;
    let graph = match (config.arch.needs_graph(), graph) {
        (true, Some(g)) => Some(g),
        (true, None) => return Err(ModelError::MissingGraph(config.arch.as_str())),
        (false, g) => g,
    };
    if let Some(g) = graph {
        if config.arch.needs_graph() && g.node_count() != x.rows() {
            return Err(ModelError::InvalidConfig(format!(
                "graph has {} nodes but features have {} rows",
                g.node_count(),
                x.rows()
            )));
        }
    }

    let layers = config.layers;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(layers),
        pre_activations: Vec::with_capacity(layers),
        neighbor_means: Vec::with_capacity(layers),
        dropout_masks: vec![None; layers],
    };

    let mut h = x.clone();
    for l in 0..layers {
        let bias = tensor(params, &format!("layer{l}.bias"))?;
        let (z, mean) = match config.arch {
            Architecture::Mlp => {
                let w = tensor(params, &format!("layer{l}.weight"))?;
                check_width(l, w.rows(), h.cols())?;
                (h.matmul(w), None)
            }
            Architecture::Gcn => {
                let w = tensor(params, &format!("layer{l}.weight"))?;
                check_width(l, w.rows(), h.cols())?;
                let p = h.matmul(w);
                (graph.unwrap().spmm_norm(&p)?, None)
            }
            Architecture::Sage => {
                let w_root = tensor(params, &format!("layer{l}.w_root"))?;
                let w_neigh = tensor(params, &format!("layer{l}.w_neigh"))?;
                check_width(l, w_root.rows(), h.cols())?;
                let mean = graph.unwrap().spmm_mean(&h);
                let mut z = h.matmul(w_root);
                z.add_scaled(&mean.matmul(w_neigh), 1.0);
                (z, Some(mean))
            }
        };
        let mut z = z;
        z.add_bias_row(bias);
        cache.inputs.push(h);
        cache.neighbor_means.push(mean);

        if l + 1 < layers {
            let mut act = z.relu();
            if train_mode && config.dropout > 0.0 {
                let keep = 1.0 - config.dropout;
                let mask = DenseMatrix::from_fn(act.rows(), act.cols(), |_, _| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                act.mul_assign_elem(&mask);
                cache.dropout_masks[l] = Some(mask);
            }
            cache.pre_activations.push(z);
            h = act;
        } else {
            cache.pre_activations.push(z.clone());
            h = z;
        }
    }
    Ok((h, cache))
}

fn check_width(layer: usize, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        if layer == 0 {
            return Err(ModelError::FeatureDim { expected, got });
        }
        return Err(ModelError::InvalidConfig(format!(
            "layer {layer} expects input width {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Backpropagate an arbitrary gradient on the logits down to every trainable
/// tensor. `cache` must come from a [`forward`] call with the same inputs.
pub fn backward_from_dlogits(
    config: &ModelConfig,
    params: &ParameterSet,
    graph: Option<&CsrGraph>,
    cache: &ForwardCache,
    dlogits: DenseMatrix,
) -> Result<GradSet, ModelError> {
    let mut grads = GradSet::zeros_like(params);
    let mut dz = dlogits;
    for l in (0..config.layers).rev() {
        let h_in = &cache.inputs[l];
        let db = dz.col_sums();
        let dh = match config.arch {
            Architecture::Mlp => {
                let w = tensor(params, &format!("layer{l}.weight"))?;
                let dw = h_in.matmul_tn(&dz);
                store(&mut grads, &format!("layer{l}.weight"), dw);
                dz.matmul_nt(w)
            }
            Architecture::Gcn => {
                let w = tensor(params, &format!("layer{l}.weight"))?;
                // Z = A_norm (H W) + b and A_norm is symmetric.
                let dp = graph
                    .ok_or(ModelError::MissingGraph("gcn"))?
                    .spmm_norm(&dz)?;
                let dw = h_in.matmul_tn(&dp);
                store(&mut grads, &format!("layer{l}.weight"), dw);
                dp.matmul_nt(w)
            }
            Architecture::Sage => {
                let w_root = tensor(params, &format!("layer{l}.w_root"))?;
                let w_neigh = tensor(params, &format!("layer{l}.w_neigh"))?;
                let mean = cache.neighbor_means[l]
                    .as_ref()
                    .expect("sage cache carries neighbor means");
                store(
                    &mut grads,
                    &format!("layer{l}.w_root"),
                    h_in.matmul_tn(&dz),
                );
                store(
                    &mut grads,
                    &format!("layer{l}.w_neigh"),
                    mean.matmul_tn(&dz),
                );
                let mut dh = dz.matmul_nt(w_root);
                let dmean = dz.matmul_nt(w_neigh);
                dh.add_scaled(
                    &graph
                        .ok_or(ModelError::MissingGraph("sage"))?
                        .spmm_mean_transpose(&dmean),
                    1.0,
                );
                dh
            }
        };
        store(&mut grads, &format!("layer{l}.bias"), db);
        if l > 0 {
            let mut dact = dh;
            if let Some(mask) = &cache.dropout_masks[l - 1] {
                dact.mul_assign_elem(mask);
            }
            dact.mul_assign_elem(&cache.pre_activations[l - 1].relu_derivative());
            dz = dact;
        }
    }
    Ok(grads)
}

fn store(grads: &mut GradSet, name: &str, value: DenseMatrix) {
    if let Some(slot) = grads.get_mut(name) {
        *slot = value;
    }
}

/// Masked cross-entropy loss and its gradients for every trainable tensor.
pub fn loss_and_grads(
    config: &ModelConfig,
    params: &ParameterSet,
    graph: Option<&CsrGraph>,
    dataset: &Dataset,
    mask: &[usize],
    train_mode: bool,
    seed: u64,
) -> Result<(f64, GradSet), ModelError> {
    let (logits, cache) = forward(config, params, graph, &dataset.features, train_mode, seed)?;
    let (loss, dlogits) = masked_cross_entropy(&logits, &dataset.labels, mask)?;
    let grads = backward_from_dlogits(config, params, graph, &cache, dlogits)?;
    Ok((loss, grads))
}

/// Eval-mode cross-entropy only, for finite-difference oracles.
pub fn loss_only(
    config: &ModelConfig,
    params: &ParameterSet,
    graph: Option<&CsrGraph>,
    dataset: &Dataset,
    mask: &[usize],
) -> Result<f64, ModelError> {
    let (logits, _) = forward(config, params, graph, &dataset.features, false, 0)?;
    let (loss, _) = masked_cross_entropy(&logits, &dataset.labels, mask)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, normalize_adjacency, SbmConfig};
    use crate::linalg::{finite_diff_grad, max_relative_error, FD_EPS_DEFAULT};

    fn sbm_instance(seed: u64, nodes_per_block: usize) -> (CsrGraph, Dataset) {
        let cfg = SbmConfig {
            blocks: 2,
            block_size: nodes_per_block,
            p_in: 0.25,
            p_out: 0.05,
            dim: 6,
            separation: 1.2,
            noise: 0.8,
            seed,
        };
        let (g, mut ds) = generate_sbm(&cfg).unwrap();
        let n = ds.node_count();
        ds.splits = crate::graph::make_splits(n, (0.7, 0.15, 0.15), seed).unwrap();
        (g, ds)
    }

    #[test]
    fn mlp_zero_weights_zero_logits() {
        let cfg = ModelConfig {
            arch: Architecture::Mlp,
            layers: 2,
            hidden: 4,
            dropout: 0.0,
            seed: 0,
        };
        let mut params = init_params(&cfg, 3, 2).unwrap();
        for p in params.iter_mut() {
            p.tensor.scale(0.0);
        }
        let x = DenseMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        let (logits, _) = forward(&cfg, &params, None, &x, false, 0).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_layer_gcn_identity_weight_reproduces_norm() {
        // Two nodes, one edge: A_norm = [[.5,.5],[.5,.5]]; X = I, W = I.
        let g = normalize_adjacency(CsrGraph::from_edges(2, &[(0, 1)]).unwrap()).unwrap();
        let cfg = ModelConfig {
            arch: Architecture::Gcn,
            layers: 1,
            hidden: 0,
            dropout: 0.0,
            seed: 0,
        };
        let mut params = init_params(&cfg, 2, 2).unwrap();
        params.get_mut("layer0.weight").unwrap().tensor = DenseMatrix::eye(2);
        let x = DenseMatrix::eye(2);
        let (logits, _) = forward(&cfg, &params, Some(&g), &x, false, 0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((logits[(i, j)] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gcn_on_edgeless_graph_equals_mlp() {
        let g = normalize_adjacency(CsrGraph::from_edges(6, &[]).unwrap()).unwrap();
        let gcn = ModelConfig {
            arch: Architecture::Gcn,
            layers: 2,
            hidden: 5,
            dropout: 0.0,
            seed: 3,
        };
        let mlp = ModelConfig {
            arch: Architecture::Mlp,
            ..gcn
        };
        let params = init_params(&gcn, 4, 3).unwrap();
        let x = DenseMatrix::from_fn(6, 4, |i, j| ((i * 7 + j) as f64).sin());
        let (a, _) = forward(&gcn, &params, Some(&g), &x, false, 0).unwrap();
        let (b, _) = forward(&mlp, &params, None, &x, false, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gcn_layer_matches_dense_oracle() {
        let (g, ds) = sbm_instance(11, 40);
        let cfg = ModelConfig {
            arch: Architecture::Gcn,
            layers: 2,
            hidden: 7,
            dropout: 0.0,
            seed: 5,
        };
        let params = init_params(&cfg, ds.feature_dim(), ds.n_classes).unwrap();
        let (logits, _) = forward(&cfg, &params, Some(&g), &ds.features, false, 0).unwrap();

        let dense = g.to_dense_norm().unwrap();
        let w0 = &params.get("layer0.weight").unwrap().tensor;
        let w1 = &params.get("layer1.weight").unwrap().tensor;
        let mut z0 = dense.matmul(&ds.features.matmul(w0));
        z0.add_bias_row(&params.get("layer0.bias").unwrap().tensor);
        let h1 = z0.relu();
        let mut z1 = dense.matmul(&h1.matmul(w1));
        z1.add_bias_row(&params.get("layer1.bias").unwrap().tensor);
        assert!(logits.max_abs_diff(&z1) < 1e-10);
    }

    #[test]
    fn dropout_zero_is_bit_deterministic() {
        let (g, ds) = sbm_instance(21, 30);
        let cfg = ModelConfig {
            arch: Architecture::Sage,
            layers: 2,
            hidden: 6,
            dropout: 0.0,
            seed: 9,
        };
        let params = init_params(&cfg, ds.feature_dim(), ds.n_classes).unwrap();
        let run = || {
            let (loss, grads) =
                loss_and_grads(&cfg, &params, Some(&g), &ds, &ds.splits.train, true, 42).unwrap();
            (loss.to_bits(), grads)
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1, l2);
        for ((n1, t1), (n2, t2)) in g1.iter().zip(g2.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.to_le_bytes(), t2.to_le_bytes());
        }
    }

    #[test]
    fn dropout_masks_differ_between_seeds() {
        let (g, ds) = sbm_instance(22, 30);
        let cfg = ModelConfig {
            arch: Architecture::Gcn,
            layers: 2,
            hidden: 6,
            dropout: 0.5,
            seed: 9,
        };
        let params = init_params(&cfg, ds.feature_dim(), ds.n_classes).unwrap();
        let (a, _) = forward(&cfg, &params, Some(&g), &ds.features, true, 1).unwrap();
        let (b, _) = forward(&cfg, &params, Some(&g), &ds.features, true, 2).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0);
        // Eval mode ignores the seed entirely.
        let (c, _) = forward(&cfg, &params, Some(&g), &ds.features, false, 1).unwrap();
        let (d, _) = forward(&cfg, &params, Some(&g), &ds.features, false, 2).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn saturated_target_has_vanishing_loss_and_grads() {
        let (g, ds) = sbm_instance(31, 20);
        let cfg = ModelConfig {
            arch: Architecture::Gcn,
            layers: 1,
            hidden: 0,
            dropout: 0.0,
            seed: 2,
        };
        let mut params = init_params(&cfg, ds.feature_dim(), ds.n_classes).unwrap();
        // Bias dominates: the correct class logit sits +50 above the rest.
        let node = 0;
        let label = ds.labels[node];
        params.get_mut("layer0.weight").unwrap().tensor.scale(0.0);
        params.get_mut("layer0.bias").unwrap().tensor[(0, label)] = 50.0;
        let (loss, grads) =
            loss_and_grads(&cfg, &params, Some(&g), &ds, &[node], false, 0).unwrap();
        assert!(loss < 1e-9);
        assert!(grads.max_abs() < 1e-8);
    }

    #[test]
    fn gradients_match_finite_differences_all_architectures() {
        let (g, ds) = sbm_instance(41, 16); // 32 nodes, fast
        for arch in [Architecture::Gcn, Architecture::Sage, Architecture::Mlp] {
            let cfg = ModelConfig {
                arch,
                layers: 2,
                hidden: 4,
                dropout: 0.0,
                seed: 13,
            };
            let params = init_params(&cfg, ds.feature_dim(), ds.n_classes).unwrap();
            let graph = arch.needs_graph().then_some(&g);
            let (_, analytic) =
                loss_and_grads(&cfg, &params, graph, &ds, &ds.splits.train, false, 0).unwrap();
            let numeric = finite_diff_grad(
                |p| loss_only(&cfg, p, graph, &ds, &ds.splits.train),
                &params,
                FD_EPS_DEFAULT,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "{arch}: relative error {err}");
        }
    }

    #[test]
    fn missing_graph_rejected() {
        let cfg = ModelConfig {
            arch: Architecture::Gcn,
            layers: 1,
            hidden: 0,
            dropout: 0.0,
            seed: 0,
        };
        let params = init_params(&cfg, 3, 2).unwrap();
        let x = DenseMatrix::zeros(4, 3);
        assert!(matches!(
            forward(&cfg, &params, None, &x, false, 0),
            Err(ModelError::MissingGraph("gcn"))
        ));
    }

    #[test]
    fn feature_width_mismatch_rejected() {
        let cfg = ModelConfig {
            arch: Architecture::Mlp,
            layers: 1,
            hidden: 0,
            dropout: 0.0,
            seed: 0,
        };
        let params = init_params(&cfg, 3, 2).unwrap();
        let x = DenseMatrix::zeros(4, 5);
        assert!(matches!(
            forward(&cfg, &params, None, &x, false, 0),
            Err(ModelError::FeatureDim { expected: 3, got: 5 })
        ));
    }
}
