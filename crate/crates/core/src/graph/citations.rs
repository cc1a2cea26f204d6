//! Synthetic citation-network benchmark in the raw content/cites format.
//!
//! A homophilous class-block graph whose documents carry sparse binary
//! bag-of-words features drawn from per-class topic blocks. The files it
//! writes are byte-compatible with the cora-raw loader, so the full
//! ingestion path can be exercised without shipping external data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{geometric_gap, normalize_adjacency, CsrGraph, Dataset, GraphError, Splits};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone)]
pub struct CitationConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    /// Vocabulary size (binary feature dimension).
    pub dim: usize,
    /// Words reserved per class as its topic block.
    pub topic_words: usize,
    /// Probability that a topic word appears in a document of its class.
    pub p_topic: f64,
    /// Probability that any other word appears.
    pub p_background: f64,
    /// Intra-class citation probability.
    pub p_in: f64,
    /// Cross-class citation probability.
    pub p_out: f64,
    pub seed: u64,
}

impl CitationConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n_nodes == 0 || self.n_classes == 0 {
            return Err(GraphError::InvalidConfig(
                "node and class counts must be positive".into(),
            ));
        }
        if self.n_classes * self.topic_words > self.dim {
            return Err(GraphError::InvalidConfig(format!(
                "{} classes x {} topic words exceed vocabulary {}",
                self.n_classes, self.topic_words, self.dim
            )));
        }
        for p in [self.p_topic, self.p_background, self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::InvalidConfig(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic per seed. Labels follow contiguous class blocks (sizes as
/// equal as the remainder allows); splits are left empty.
pub fn generate_citations(config: &CitationConfig) -> Result<(CsrGraph, Dataset), GraphError> {
    config.validate()?;
    let n = config.n_nodes;
    let k = config.n_classes;
    let labels: Vec<usize> = (0..n).map(|i| (i * k) / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Edges by row-wise skip sampling, exactly as the block-model generator.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut sample_range = |rng: &mut ChaCha8Rng, i: usize, start: usize, end: usize, p: f64, edges: &mut Vec<(usize, usize)>| {
        if start >= end || p <= 0.0 {
            return;
        }
        if p >= 1.0 {
            for j in start..end {
                edges.push((i, j));
            }
            return;
        }
        let mut j = start + geometric_gap(rng, p);
        while j < end {
            edges.push((i, j));
            j += 1 + geometric_gap(rng, p);
        }
    };
    // Class c spans [class_start[c], class_start[c + 1]).
    let class_start: Vec<usize> = {
        let mut starts = vec![0usize; k + 1];
        for (i, &l) in labels.iter().enumerate() {
            starts[l + 1] = i + 1;
        }
        for c in 1..=k {
            if starts[c] == 0 {
                starts[c] = starts[c - 1];
            }
        }
        starts
    };
    for i in 0..n {
        let ci = labels[i];
        for cj in ci..k {
            let start = class_start[cj].max(i + 1);
            let end = class_start[cj + 1];
            let p = if cj == ci { config.p_in } else { config.p_out };
            sample_range(&mut rng, i, start, end, p, &mut edges);
        }
    }
    let graph = normalize_adjacency(CsrGraph::from_edges(n, &edges)?)?;

    let mut features = DenseMatrix::zeros(n, config.dim);
    for i in 0..n {
        let topic_lo = labels[i] * config.topic_words;
        let topic_hi = topic_lo + config.topic_words;
        let row = features.row_mut(i);
        for (w, v) in row.iter_mut().enumerate() {
            let p = if (topic_lo..topic_hi).contains(&w) {
                config.p_topic
            } else {
                config.p_background
            };
            if rng.gen::<f64>() < p {
                *v = 1.0;
            }
        }
    }

    let dataset = Dataset {
        features,
        labels,
        splits: Splits::default(),
        n_classes: k,
    };
    Ok((graph, dataset))
}

/// Write the graph and dataset as a `<stem>.content` / `<stem>.cites` pair.
/// Line order is deterministically shuffled so loaders must honor the id
/// mapping rather than file order.
pub fn write_cora_raw(
    graph: &CsrGraph,
    dataset: &Dataset,
    dir: &Path,
    stem: &str,
    seed: u64,
) -> Result<(), GraphError> {
    let n = dataset.node_count();
    let io_err = |path: &Path, source: std::io::Error| GraphError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let id_of = |i: usize| format!("doc{:06}", i + 100_000);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let content_path = dir.join(format!("{stem}.content"));
    let mut content = String::new();
    for &i in &order {
        content.push_str(&id_of(i));
        for &v in dataset.features.row(i) {
            content.push('\t');
            content.push(if v != 0.0 { '1' } else { '0' });
        }
        content.push_str(&format!("\tclass_{:02}\n", dataset.labels[i]));
    }
    fs::File::create(&content_path)
        .and_then(|mut f| f.write_all(content.as_bytes()))
        .map_err(|e| io_err(&content_path, e))?;

    let cites_path = dir.join(format!("{stem}.cites"));
    let mut cites = String::new();
    for i in 0..n {
        for &j in graph.neighbors(i) {
            if j > i {
                cites.push_str(&format!("{}\t{}\n", id_of(i), id_of(j)));
            }
        }
    }
    fs::File::create(&cites_path)
        .and_then(|mut f| f.write_all(cites.as_bytes()))
        .map_err(|e| io_err(&cites_path, e))?;
    Ok(())
}
