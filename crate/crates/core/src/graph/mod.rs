//! Sparse undirected graphs in CSR form, the symmetric normalization
//! `D^{-1/2} (A + I) D^{-1/2}`, and the kernels the models run on.

mod citations;
mod dataset;
mod io;
mod sbm;

pub use citations::{generate_citations, write_cora_raw, CitationConfig};
pub use dataset::{flip_labels, make_splits, Dataset, FlippedNode, Splits};
pub use io::{load_dataset, DatasetFormat, LoadReport};
pub use sbm::{generate_sbm, SbmConfig};

use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("adjacency is not symmetric: edge ({0}, {1}) has no reverse")]
    Asymmetric(usize, usize),
    #[error("node id {id} out of range for {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("node subset must not be empty")]
    EmptySubset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("graph has no cached normalized adjacency")]
    NotNormalized,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Cached `D^{-1/2} (A + I) D^{-1/2}`. Self-loops are virtual: `off_diag`
/// aligns with the CSR pattern of `A` and `diag` holds the `+I` part.
#[derive(Debug, Clone)]
pub struct NormAdjacency<T: Scalar = f64> {
    pub off_diag: Vec<T>,
    pub diag: Vec<T>,
}

/// Undirected graph, symmetric CSR, no stored self-loops, no duplicates.
#[derive(Debug, Clone)]
pub struct CsrGraph<T: Scalar = f64> {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    norm: Option<NormAdjacency<T>>,
}

impl<T: Scalar> CsrGraph<T> {
    /// Build from an edge list. Edges are symmetrized and deduplicated;
    /// self-loops are dropped (the normalization adds them virtually).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { id: a.max(b), n });
            }
            if a == b {
                continue;
            }
            pairs.push((a, b));
            pairs.push((b, a));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut indptr = vec![0usize; n + 1];
        for &(a, _) in &pairs {
            indptr[a + 1] += 1;
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let indices = pairs.into_iter().map(|(_, b)| b).collect();
        Ok(Self {
            n,
            indptr,
            indices,
            norm: None,
        })
    }

    /// Build from raw CSR arrays; validates ordering, range, symmetry, and
    /// the no-self-loop/no-duplicate invariants.
    pub fn from_csr_arrays(
        n: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
    ) -> Result<Self, GraphError> {
        if indptr.len() != n + 1 || indptr[0] != 0 || *indptr.last().unwrap() != indices.len() {
            return Err(GraphError::InvalidConfig("malformed indptr".into()));
        }
        let g = Self {
            n,
            indptr,
            indices,
            norm: None,
        };
        for i in 0..n {
            let nbrs = g.neighbors(i);
            for (k, &j) in nbrs.iter().enumerate() {
                if j >= n {
                    return Err(GraphError::NodeOutOfRange { id: j, n });
                }
                if j == i {
                    return Err(GraphError::InvalidConfig(format!("self-loop at node {i}")));
                }
                if k > 0 && nbrs[k - 1] >= j {
                    return Err(GraphError::InvalidConfig(format!(
                        "row {i} is not strictly sorted"
                    )));
                }
                if !g.has_edge(j, i) {
                    return Err(GraphError::Asymmetric(i, j));
                }
            }
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn is_normalized(&self) -> bool {
        self.norm.is_some()
    }

    pub fn norm(&self) -> Result<&NormAdjacency<T>, GraphError> {
        self.norm.as_ref().ok_or(GraphError::NotNormalized)
    }

    fn is_symmetric(&self) -> Result<(), GraphError> {
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if !self.has_edge(j, i) {
                    return Err(GraphError::Asymmetric(i, j));
                }
            }
        }
        Ok(())
    }

    /// `y = A_norm * h` using the cached normalization. Output rows are
    /// accumulated independently, so the result does not depend on threading.
    pub fn spmm_norm(&self, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>, GraphError> {
        let norm = self.norm()?;
        assert_eq!(h.rows(), self.n, "spmm_norm row mismatch");
        let cols = h.cols();
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let (start, end) = (self.indptr[i], self.indptr[i + 1]);
            let out_row = out.row_mut(i);
            let d = norm.diag[i];
            for (o, &x) in out_row.iter_mut().zip(h.row(i)) {
                *o = d * x;
            }
            for e in start..end {
                let w = norm.off_diag[e];
                let src = h.row(self.indices[e]);
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// Mean of neighbor rows (no self term); isolated nodes get a zero row.
    pub fn spmm_mean(&self, h: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(h.rows(), self.n, "spmm_mean row mismatch");
        let cols = h.cols();
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let (start, end) = (self.indptr[i], self.indptr[i + 1]);
            if start == end {
                continue;
            }
            let inv = T::one() / real::<T>((end - start) as f64);
            let out_row = out.row_mut(i);
            for e in start..end {
                let src = h.row(self.indices[e]);
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += x;
                }
            }
            for o in out_row.iter_mut() {
                *o *= inv;
            }
        }
        out
    }

    /// Transpose companion of [`Self::spmm_mean`]: `y = A D^{-1} g`, i.e.
    /// each incoming contribution is scaled by the *sender's* degree.
    pub fn spmm_mean_transpose(&self, g: &DenseMatrix<T>) -> DenseMatrix<T> {
        assert_eq!(g.rows(), self.n, "spmm_mean_transpose row mismatch");
        let cols = g.cols();
        let mut scaled = g.clone();
        for j in 0..self.n {
            let deg = self.degree(j);
            if deg == 0 {
                for v in scaled.row_mut(j) {
                    *v = T::zero();
                }
            } else {
                let inv = T::one() / real::<T>(deg as f64);
                for v in scaled.row_mut(j) {
                    *v *= inv;
                }
            }
        }
        let mut out = DenseMatrix::zeros(self.n, cols);
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for e in self.indptr[i]..self.indptr[i + 1] {
                let src = scaled.row(self.indices[e]);
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += x;
                }
            }
        }
        out
    }

    /// Dense copy of the cached normalized adjacency.
    pub fn to_dense_norm(&self) -> Result<DenseMatrix<T>, GraphError> {
        let norm = self.norm()?;
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            out[(i, i)] = norm.diag[i];
            for e in self.indptr[i]..self.indptr[i + 1] {
                out[(i, self.indices[e])] = norm.off_diag[e];
            }
        }
        Ok(out)
    }

    /// Sorted nodes of the largest connected component.
    pub fn largest_component(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut best: Vec<usize> = Vec::new();
        let mut stack = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Failures before the first success of a Bernoulli(p) stream, for skip
/// sampling sparse edge sets. Callers must special-case p = 0 and p = 1.
pub(crate) fn geometric_gap(rng: &mut rand_chacha::ChaCha8Rng, p: f64) -> usize {
    use rand::Rng;
    let u: f64 = rng.gen();
    let gap = ((1.0 - u).ln() / (1.0 - p).ln()).floor();
    if gap >= usize::MAX as f64 {
        usize::MAX
    } else {
        gap as usize
    }
}

/// Attach the cached normalization `D^{-1/2} (A + I) D^{-1/2}` where `D` is
/// the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Scalar>(mut graph: CsrGraph<T>) -> Result<CsrGraph<T>, GraphError> {
    graph.is_symmetric()?;
    let n = graph.n;
    let inv_sqrt: Vec<T> = (0..n)
        .map(|i| T::one() / real::<T>((graph.degree(i) + 1) as f64).sqrt())
        .collect();
    let mut off_diag = vec![T::zero(); graph.indices.len()];
    for i in 0..n {
        for e in graph.indptr[i]..graph.indptr[i + 1] {
            off_diag[e] = inv_sqrt[i] * inv_sqrt[graph.indices[e]];
        }
    }
    let diag = inv_sqrt.iter().map(|&v| v * v).collect();
    graph.norm = Some(NormAdjacency { off_diag, diag });
    Ok(graph)
}

/// Subgraph induced by `nodes` (deduplicated, ascending). Keeps exactly the
/// edges with both endpoints inside, renormalizes if the parent carried a
/// normalization, and returns the old-to-new index map.
pub fn induced_subgraph<T: Scalar>(
    graph: &CsrGraph<T>,
    nodes: &[usize],
) -> Result<(CsrGraph<T>, Vec<Option<usize>>), GraphError> {
    if nodes.is_empty() {
        return Err(GraphError::EmptySubset);
    }
    let mut keep: Vec<usize> = nodes.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&max) = keep.last() {
        if max >= graph.n {
            return Err(GraphError::NodeOutOfRange {
                id: max,
                n: graph.n,
            });
        }
    }
    let mut old_to_new = vec![None; graph.n];
    for (new, &old) in keep.iter().enumerate() {
        old_to_new[old] = Some(new);
    }

    let mut indptr = Vec::with_capacity(keep.len() + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    for &old in &keep {
        for &nbr in graph.neighbors(old) {
            if let Some(new_nbr) = old_to_new[nbr] {
                indices.push(new_nbr);
            }
        }
        indptr.push(indices.len());
    }
    let sub = CsrGraph {
        n: keep.len(),
        indptr,
        indices,
        norm: None,
    };
    let sub = if graph.norm.is_some() {
        normalize_adjacency(sub)?
    } else {
        sub
    };
    Ok((sub, old_to_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_norm_oracle(n: usize, edges: &[(usize, usize)]) -> DenseMatrix {
        // (A + I) scaled by 1/sqrt(d_i d_j) straight from the definition.
        let mut a = DenseMatrix::eye(n);
        for &(i, j) in edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).sum()).collect();
        DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
    }

    fn random_graph(seed: u64, n: usize, p: f64) -> (CsrGraph, Vec<(usize, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = normalize_adjacency(CsrGraph::from_edges(n, &edges).unwrap()).unwrap();
        (g, edges)
    }

    #[test]
    fn isolated_node_normalizes_to_identity() {
        let g: CsrGraph = normalize_adjacency(CsrGraph::from_edges(1, &[]).unwrap()).unwrap();
        let dense = g.to_dense_norm().unwrap();
        assert_eq!(dense[(0, 0)], 1.0);
    }

    #[test]
    fn two_node_edge_hand_oracle() {
        let g: CsrGraph =
            normalize_adjacency(CsrGraph::from_edges(2, &[(0, 1)]).unwrap()).unwrap();
        let dense = g.to_dense_norm().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((dense[(i, j)] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_graph_hand_oracle() {
        // 0 - 1 - 2, degrees with self-loops (2, 3, 2).
        let g: CsrGraph =
            normalize_adjacency(CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()).unwrap();
        let dense = g.to_dense_norm().unwrap();
        assert!((dense[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((dense[(0, 1)] - 1.0 / 6.0_f64.sqrt()).abs() < 1e-15);
        assert!((dense[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((dense[(0, 2)]).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_csr_rejected() {
        // Row 0 lists neighbor 1, but row 1 is empty.
        let err = CsrGraph::<f64>::from_csr_arrays(2, vec![0, 1, 1], vec![1]);
        assert!(matches!(err, Err(GraphError::Asymmetric(0, 1))));
    }

    #[test]
    fn normalization_matches_dense_oracle() {
        for seed in 0..5 {
            let (g, edges) = random_graph(seed, 40, 0.1);
            let dense = g.to_dense_norm().unwrap();
            let oracle = dense_norm_oracle(40, &edges);
            assert!(dense.max_abs_diff(&oracle) < 1e-12);
            // Symmetry of the cached values.
            assert!(dense.max_abs_diff(&dense.transpose()) < 1e-12);
        }
    }

    #[test]
    fn spectral_radius_at_most_one() {
        for seed in 0..3 {
            let (g, _) = random_graph(100 + seed, 30, 0.15);
            let dense = g.to_dense_norm().unwrap();
            let m = nalgebra::DMatrix::from_fn(30, 30, |i, j| dense[(i, j)]);
            let eig = m.symmetric_eigen();
            let rho = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!(rho <= 1.0 + 1e-9, "spectral radius {rho} too large");
        }
    }

    #[test]
    fn spmm_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..8 {
            let n = 20 + (seed as usize) * 17; // up to ~140
            let (g, _) = random_graph(200 + seed, n, 0.08);
            let h = DenseMatrix::from_fn(n, 9, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let sparse = g.spmm_norm(&h).unwrap();
            let dense = g.to_dense_norm().unwrap().matmul(&h);
            assert!(sparse.max_abs_diff(&dense) < 1e-10);
        }
    }

    #[test]
    fn mean_aggregate_and_transpose_are_adjoint() {
        // <A_mean x, y> == <x, A_mean^T y> for random vectors.
        let (g, _) = random_graph(42, 25, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DenseMatrix::from_fn(25, 3, |_, _| rng.gen::<f64>() - 0.5);
        let y = DenseMatrix::from_fn(25, 3, |_, _| rng.gen::<f64>() - 0.5);
        let ax = g.spmm_mean(&x);
        let aty = g.spmm_mean_transpose(&y);
        let lhs: f64 = ax.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(aty.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn isolated_nodes_get_zero_neighbor_mean() {
        let g: CsrGraph = CsrGraph::from_edges(3, &[(0, 1)]).unwrap();
        let h = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 + 1.0);
        let m = g.spmm_mean(&h);
        assert_eq!(m.row(2), &[0.0, 0.0]);
        assert_eq!(m.row(0), h.row(1));
    }

    #[test]
    fn induced_subgraph_identity() {
        let (g, _) = random_graph(5, 30, 0.1);
        let all: Vec<usize> = (0..30).collect();
        let (sub, map) = induced_subgraph(&g, &all).unwrap();
        assert_eq!(sub.node_count(), 30);
        assert_eq!(sub.edge_count(), g.edge_count());
        for (old, new) in map.iter().enumerate() {
            assert_eq!(*new, Some(old));
        }
        let a = g.to_dense_norm().unwrap();
        let b = sub.to_dense_norm().unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn triangle_to_pair_renormalizes() {
        let g: CsrGraph =
            normalize_adjacency(CsrGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap())
                .unwrap();
        let (sub, map) = induced_subgraph(&g, &[0, 1]).unwrap();
        let dense = sub.to_dense_norm().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((dense[(i, j)] - 0.5).abs() < 1e-15);
            }
        }
        assert_eq!(map[2], None);
    }

    #[test]
    fn non_adjacent_subset_gives_identity() {
        let g: CsrGraph =
            normalize_adjacency(CsrGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap()).unwrap();
        let (sub, _) = induced_subgraph(&g, &[0, 2]).unwrap();
        assert_eq!(sub.edge_count(), 0);
        let dense = sub.to_dense_norm().unwrap();
        assert!(dense.max_abs_diff(&DenseMatrix::eye(2)) < 1e-15);
    }

    #[test]
    fn empty_subset_rejected() {
        let g: CsrGraph = CsrGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(matches!(
            induced_subgraph(&g, &[]),
            Err(GraphError::EmptySubset)
        ));
    }

    #[test]
    fn induced_then_normalized_matches_dense_submatrix_oracle() {
        for seed in 0..4 {
            let (g, edges) = random_graph(300 + seed, 35, 0.12);
            let keep: Vec<usize> = (0..35).filter(|i| i % 3 != 1).collect();
            let (sub, map) = induced_subgraph(&g, &keep).unwrap();
            let sub_edges: Vec<(usize, usize)> = edges
                .iter()
                .filter_map(|&(a, b)| match (map[a], map[b]) {
                    (Some(x), Some(y)) => Some((x, y)),
                    _ => None,
                })
                .collect();
            let oracle = dense_norm_oracle(keep.len(), &sub_edges);
            assert!(sub.to_dense_norm().unwrap().max_abs_diff(&oracle) < 1e-12);
        }
    }

    #[test]
    fn largest_component_finds_giant() {
        let g: CsrGraph = CsrGraph::from_edges(6, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        assert_eq!(g.largest_component(), vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn normalized_rows_positive_and_symmetric(seed in 0u64..500) {
            let (g, _) = random_graph(seed, 15, 0.25);
            let dense = g.to_dense_norm().unwrap();
            prop_assert!(dense.max_abs_diff(&dense.transpose()) < 1e-12);
            for i in 0..15 {
                prop_assert!(dense[(i, i)] > 0.0);
                for &j in g.neighbors(i) {
                    prop_assert!(dense[(i, j)] > 0.0);
                }
            }
        }
    }
}
