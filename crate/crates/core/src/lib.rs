//! Deterministic graph-neural-network training and model-editing workbench.
//!
//! The crate trains GCN / GraphSAGE / MLP node classifiers from scratch
//! (hand-derived backward passes, finite-difference gated), edits them with
//! three editors (gradient descent on the GNN, a prepared-for-editing
//! variant, and the stitched-MLP editor that freezes the GNN), and measures
//! edit success rate, accuracy drawdown, and latency. It also scans KL
//! locality loss landscapes and numerically verifies the one-layer locality
//! analysis (Taylor KL, edit gradient, over-smoothing inequality).
//!
//! The numeric kernels are generic over [`Scalar`] (`f32`/`f64`); the
//! workbench itself runs entirely in `f64` ([`Real`]).

pub mod graph;
pub mod linalg;
pub mod params;
pub mod scalar;

pub use graph::{CsrGraph, Dataset, GraphError, Splits};
pub use linalg::{DenseMatrix, LinalgError};
pub use params::{GradSet, Param, ParameterSet};
pub use scalar::Scalar;

/// The scalar type every experiment runs at.
pub type Real = f64;

/// Locate a real copy of the Cora raw files: `$CORA_DIR` if set, otherwise
/// `data/cora/` relative to the workspace root. Returns the directory that
/// holds the `.content`/`.cites` pair, or `None` when absent — callers fall
/// back to the synthetic citation benchmark.
pub fn find_real_cora() -> Option<std::path::PathBuf> {
    let has_pair = |dir: &std::path::Path| {
        let mut content = false;
        let mut cites = false;
        if let Ok(entries) = std::fs::read_dir(dir) {
            for e in entries.flatten() {
                match e.path().extension().and_then(|x| x.to_str()) {
                    Some("content") => content = true,
                    Some("cites") => cites = true,
                    _ => {}
                }
            }
        }
        content && cites
    };
    if let Ok(dir) = std::env::var("CORA_DIR") {
        let dir = std::path::PathBuf::from(dir);
        if has_pair(&dir) {
            return Some(dir);
        }
    }
    let workspace = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)?
        .to_path_buf();
    let candidate = workspace.join("data").join("cora");
    has_pair(&candidate).then_some(candidate)
}
