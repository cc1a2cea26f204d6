//! Stochastic block model generator: the desk-scale synthetic benchmark.
//!
//! Edges are drawn with geometric skip sampling so generation is O(n + E)
//! rather than O(n^2); features are Gaussian around equidistant class means
//! (`separation * e_c` on the standard basis).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{normalize_adjacency, CsrGraph, Dataset, GraphError, Splits};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn node_count(&self) -> usize {
        self.blocks * self.block_size
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.blocks == 0 || self.block_size == 0 {
            return Err(GraphError::InvalidConfig(
                "blocks and block_size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(GraphError::InvalidConfig(
                "edge probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.p_out > self.p_in {
            return Err(GraphError::InvalidConfig(
                "p_out must not exceed p_in".into(),
            ));
        }
        if self.separation <= 0.0 {
            return Err(GraphError::InvalidConfig("separation must be > 0".into()));
        }
        if self.noise < 0.0 {
            return Err(GraphError::InvalidConfig("noise must be >= 0".into()));
        }
        if self.dim < self.blocks {
            return Err(GraphError::InvalidConfig(format!(
                "feature dim {} must be >= block count {} for equidistant means",
                self.dim, self.blocks
            )));
        }
        Ok(())
    }
}

pub(super) use super::geometric_gap;

/// Deterministic per seed: identical config and seed reproduce the graph and
/// features bit-for-bit. Labels are the block ids; splits are left empty.
pub fn generate_sbm(config: &SbmConfig) -> Result<(CsrGraph, Dataset), GraphError> {
    config.validate()?;
    let n = config.node_count();
    let bs = config.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Edges first, then features: the draw order is part of the contract.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let block_i = i / bs;
        for block_j in block_i..config.blocks {
            let start = ((block_j * bs).max(i + 1)).min(n);
            let end = (block_j + 1) * bs;
            if start >= end {
                continue;
            }
            let p = if block_j == block_i {
                config.p_in
            } else {
                config.p_out
            };
            if p <= 0.0 {
                continue;
            }
            if p >= 1.0 {
                for j in start..end {
                    edges.push((i, j));
                }
                continue;
            }
            let mut j = start + geometric_gap(&mut rng, p);
            while j < end {
                edges.push((i, j));
                j += 1 + geometric_gap(&mut rng, p);
            }
        }
    }
    let graph = normalize_adjacency(CsrGraph::from_edges(n, &edges)?)?;

    let mut features = DenseMatrix::zeros(n, config.dim);
    for i in 0..n {
        let class = i / bs;
        let row = features.row_mut(i);
        for (d, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = config.noise * noise + if d == class { config.separation } else { 0.0 };
        }
    }

    let labels: Vec<usize> = (0..n).map(|i| i / bs).collect();
    let dataset = Dataset {
        features,
        labels,
        splits: Splits::default(),
        n_classes: config.blocks,
    };
    Ok((graph, dataset))
}
