//! The stitched-MLP composite: frozen GNN logits plus a trainable
//! feature-only MLP, summed row-wise. The frozen cache is computed once on
//! the full graph; after that nothing in the composite touches the graph.

use super::{forward, init_params, ModelConfig, ModelError};
use crate::graph::CsrGraph;
use crate::linalg::DenseMatrix;
use crate::params::ParameterSet;

#[derive(Debug, Clone)]
pub struct EgnnModel {
    pub gnn_config: ModelConfig,
    /// Frozen backbone weights; every trainable flag is false.
    pub gnn_params: ParameterSet,
    /// Backbone logits for every node, cached at stitch time.
    pub frozen_logits: DenseMatrix,
    pub mlp_config: ModelConfig,
    /// The stitched MLP; the only thing edits may touch.
    pub mlp_params: ParameterSet,
    /// Locality-loss weight used during preparation.
    pub alpha: f64,
}

impl EgnnModel {
    /// Stitch a fresh MLP onto a trained backbone. The MLP's hidden layers
    /// are Glorot-initialized from `mlp_config.seed`; its output layer is
    /// zeroed so the composite starts exactly equal to the backbone.
    pub fn stitch(
        gnn_config: ModelConfig,
        mut gnn_params: ParameterSet,
        graph: &CsrGraph,
        features: &DenseMatrix,
        mlp_config: ModelConfig,
        alpha: f64,
    ) -> Result<Self, ModelError> {
        if mlp_config.arch != super::Architecture::Mlp {
            return Err(ModelError::InvalidConfig(
                "the stitched module must be an mlp".into(),
            ));
        }
        let graph_ref = gnn_config.arch.needs_graph().then_some(graph);
        let (frozen_logits, _) = forward(&gnn_config, &gnn_params, graph_ref, features, false, 0)?;
        gnn_params.freeze_all();

        let n_classes = frozen_logits.cols();
        let mut mlp_params = init_params(&mlp_config, features.cols(), n_classes)?;
        let last = mlp_config.layers - 1;
        for name in [format!("layer{last}.weight"), format!("layer{last}.bias")] {
            mlp_params
                .get_mut(&name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?
                .tensor
                .scale(0.0);
        }
        Ok(Self {
            gnn_config,
            gnn_params,
            frozen_logits,
            mlp_config,
            mlp_params,
            alpha,
        })
    }

    pub fn node_count(&self) -> usize {
        self.frozen_logits.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.frozen_logits.cols()
    }
}

/// Composite logits `H[nodes] + g(X[nodes])`. Propagation-free: only the
/// cached rows and the node features are consulted, never the graph.
pub fn egnn_forward(
    model: &EgnnModel,
    features: &DenseMatrix,
    nodes: &[usize],
) -> Result<DenseMatrix, ModelError> {
    for &i in nodes {
        if i >= model.frozen_logits.rows() {
            return Err(ModelError::NodeOutsideCache {
                node: i,
                rows: model.frozen_logits.rows(),
            });
        }
    }
    let x = features.select_rows(nodes);
    let (delta, _) = forward(&model.mlp_config, &model.mlp_params, None, &x, false, 0)?;
    let mut out = model.frozen_logits.select_rows(nodes);
    out.add_scaled(&delta, 1.0);
    Ok(out)
}
