//! Node features, labels, split masks, and label corruption.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GraphError;
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Disjoint train/val/test node subsets, each sorted ascending.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar = f64> {
    pub features: DenseMatrix<T>,
    pub labels: Vec<usize>,
    pub splits: Splits,
    pub n_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.features.rows() != self.labels.len() {
            return Err(GraphError::InvalidConfig(format!(
                "{} feature rows for {} labels",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if !self.features.all_finite() {
            return Err(GraphError::InvalidConfig("non-finite feature".into()));
        }
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= self.n_classes {
                return Err(GraphError::InvalidConfig(format!(
                    "label {y} at node {i} exceeds class count {}",
                    self.n_classes
                )));
            }
        }
        let mut seen = vec![0u8; self.node_count()];
        for subset in [&self.splits.train, &self.splits.val, &self.splits.test] {
            for &i in subset {
                if i >= self.node_count() {
                    return Err(GraphError::NodeOutOfRange {
                        id: i,
                        n: self.node_count(),
                    });
                }
                seen[i] += 1;
                if seen[i] > 1 {
                    return Err(GraphError::InvalidConfig(format!(
                        "node {i} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Restrict to `nodes` (sorted ascending): features, labels, and an
    /// all-train split over the new indices.
    pub fn induce(&self, nodes: &[usize]) -> Dataset<T> {
        Dataset {
            features: self.features.select_rows(nodes),
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
            splits: Splits {
                train: (0..nodes.len()).collect(),
                val: Vec::new(),
                test: Vec::new(),
            },
            n_classes: self.n_classes,
        }
    }

    /// Train nodes carrying the given label.
    pub fn train_nodes_of_class(&self, class_id: usize) -> Vec<usize> {
        self.splits
            .train
            .iter()
            .copied()
            .filter(|&i| self.labels[i] == class_id)
            .collect()
    }
}

/// Seeded shuffle split into `floor(fraction * n)`-sized masks.
pub fn make_splits(
    n: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Splits, GraphError> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 {
        return Err(GraphError::InvalidConfig(
            "split fractions must be non-negative".into(),
        ));
    }
    if ft + fv + fs > 1.0 + 1e-12 {
        return Err(GraphError::InvalidConfig(format!(
            "split fractions sum to {} > 1",
            ft + fv + fs
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = (ft * n as f64).floor() as usize;
    let n_val = (fv * n as f64).floor() as usize;
    let n_test = (fs * n as f64).floor() as usize;
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = order[n_train + n_val..n_train + n_val + n_test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test })
}

/// A single corrupted label, keeping the original for later correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlippedNode {
    pub node: usize,
    pub original: usize,
    pub flipped_to: usize,
}

/// Flip `floor(fraction * |train nodes of class_id|)` seeded-chosen train
/// nodes of the class to uniformly random *different* classes.
pub fn flip_labels<T: Scalar>(
    dataset: &Dataset<T>,
    class_id: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Vec<FlippedNode>), GraphError> {
    if class_id >= dataset.n_classes {
        return Err(GraphError::InvalidConfig(format!(
            "class {class_id} out of range"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(GraphError::InvalidConfig(format!(
            "flip fraction {fraction} outside [0, 1]"
        )));
    }
    let mut candidates = dataset.train_nodes_of_class(class_id);
    let count = (fraction * candidates.len() as f64).floor() as usize;
    let mut out = dataset.clone();
    let mut flips = Vec::with_capacity(count);
    if count == 0 {
        return Ok((out, flips));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    for &node in candidates.iter().take(count) {
        let mut new_label = rng.gen_range(0..dataset.n_classes - 1);
        if new_label >= class_id {
            new_label += 1;
        }
        out.labels[node] = new_label;
        flips.push(FlippedNode {
            node,
            original: class_id,
            flipped_to: new_label,
        });
    }
    flips.sort_unstable_by_key(|f| f.node);
    Ok((out, flips))
}
