//! Dataset ingestion: the citation-network raw format (tab-separated
//! `.content` / `.cites` file pair) and a generic CSV pair.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{induced_subgraph, normalize_adjacency, CsrGraph, Dataset, GraphError, Splits};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Tab-separated `.content` lines (id, binary features, class string)
    /// and `.cites` lines (cited id, citing id).
    CoraRaw,
    /// `nodes.csv` with header `id,f0..f{d-1},label` and `edges.csv` with
    /// header `src,dst`.
    GenericCsv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cora-raw" => Ok(Self::CoraRaw),
            "generic-csv" => Ok(Self::GenericCsv),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// What the loader dropped or kept, for the one-line summaries.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    /// Edges whose endpoint ids did not resolve (cora-raw only; the generic
    /// format treats them as hard errors).
    pub dangling_edges: usize,
    pub self_loops: usize,
    pub duplicate_edges: usize,
    /// Nodes removed by largest-connected-component restriction.
    pub nodes_dropped: usize,
}

fn read_to_string(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Accepts either a directory holding exactly one `*.content` / `*.cites`
/// pair or a path prefix (`dir/cora` for `dir/cora.content`).
fn resolve_cora_pair(path: &Path) -> Result<(PathBuf, PathBuf), GraphError> {
    if path.is_dir() {
        let mut content = None;
        let mut cites = None;
        let entries = fs::read_dir(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut names: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        names.sort();
        for p in names {
            match p.extension().and_then(|e| e.to_str()) {
                Some("content") if content.is_none() => content = Some(p),
                Some("cites") if cites.is_none() => cites = Some(p),
                _ => {}
            }
        }
        match (content, cites) {
            (Some(c), Some(e)) => Ok((c, e)),
            _ => Err(GraphError::InvalidConfig(format!(
                "{} does not contain a .content/.cites pair",
                path.display()
            ))),
        }
    } else {
        let content = path.with_extension("content");
        let cites = path.with_extension("cites");
        Ok((content, cites))
    }
}

fn load_cora_raw(path: &Path) -> Result<(CsrGraph, Dataset, LoadReport), GraphError> {
    let (content_path, cites_path) = resolve_cora_pair(path)?;
    let content = read_to_string(&content_path)?;

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut dim = None;
    for (lineno, raw) in content.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(parse_err(
                &content_path,
                lineno + 1,
                format!("expected id, features, class; got {} fields", fields.len()),
            ));
        }
        let d = fields.len() - 2;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(parse_err(
                    &content_path,
                    lineno + 1,
                    format!("feature count {d} differs from first line ({expected})"),
                ));
            }
            _ => {}
        }
        let id = fields[0].to_string();
        if ids.insert(id.clone(), rows.len()).is_some() {
            return Err(parse_err(
                &content_path,
                lineno + 1,
                format!("duplicate node id {id:?}"),
            ));
        }
        let mut feat = Vec::with_capacity(d);
        for f in &fields[1..=d] {
            let v: i64 = f.parse().map_err(|_| {
                parse_err(&content_path, lineno + 1, format!("bad feature value {f:?}"))
            })?;
            feat.push(v as f64);
        }
        rows.push(feat);
        class_names.push(fields[d + 1].to_string());
    }
    if rows.is_empty() {
        return Err(parse_err(&content_path, 1, "empty content file"));
    }

    // Stable class-id assignment: sort names, then map.
    let mut sorted = class_names.clone();
    sorted.sort();
    sorted.dedup();
    let class_ids: HashMap<&str, usize> = sorted
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let labels: Vec<usize> = class_names.iter().map(|c| class_ids[c.as_str()]).collect();

    let cites = read_to_string(&cites_path)?;
    let mut report = LoadReport::default();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (lineno, raw) in cites.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (cited, citing) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(parse_err(
                    &cites_path,
                    lineno + 1,
                    "expected two tab-separated ids",
                ))
            }
        };
        match (ids.get(cited), ids.get(citing)) {
            (Some(&a), Some(&b)) => {
                if a == b {
                    report.self_loops += 1;
                } else {
                    edges.push((b, a));
                }
            }
            _ => report.dangling_edges += 1,
        }
    }
    edges.sort_unstable_by_key(|&(a, b)| (a.min(b), a.max(b)));
    let before = edges.len();
    edges.dedup_by_key(|&mut (a, b)| (a.min(b), a.max(b)));
    report.duplicate_edges = before - edges.len();

    let graph = normalize_adjacency(CsrGraph::from_edges(rows.len(), &edges)?)?;
    let dataset = Dataset {
        features: DenseMatrix::from_rows(&rows),
        labels,
        splits: Splits::default(),
        n_classes: sorted.len(),
    };
    Ok((graph, dataset, report))
}

fn load_generic_csv(path: &Path) -> Result<(CsrGraph, Dataset, LoadReport), GraphError> {
    let nodes_path = path.join("nodes.csv");
    let edges_path = path.join("edges.csv");
    let nodes_text = read_to_string(&nodes_path)?;

    let mut lines = nodes_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(&nodes_path, 1, "empty nodes file"))?;
    let header: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if header.len() < 3 || header[0] != "id" || *header.last().unwrap() != "label" {
        return Err(parse_err(
            &nodes_path,
            1,
            "header must be id,f0..f{d-1},label",
        ));
    }
    let dim = header.len() - 2;
    for (k, name) in header[1..=dim].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(parse_err(
                &nodes_path,
                1,
                format!("feature column {} must be named f{k}", name),
            ));
        }
    }

    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                &nodes_path,
                lineno + 1,
                format!("expected {} fields, got {}", dim + 2, fields.len()),
            ));
        }
        let id = fields[0].to_string();
        if ids.insert(id.clone(), rows.len()).is_some() {
            return Err(parse_err(
                &nodes_path,
                lineno + 1,
                format!("duplicate node id {id:?}"),
            ));
        }
        let mut feat = Vec::with_capacity(dim);
        for f in &fields[1..=dim] {
            let v: f64 = f.parse().map_err(|_| {
                parse_err(&nodes_path, lineno + 1, format!("bad feature value {f:?}"))
            })?;
            feat.push(v);
        }
        let label: usize = fields[dim + 1].parse().map_err(|_| {
            parse_err(
                &nodes_path,
                lineno + 1,
                format!("bad label {:?}", fields[dim + 1]),
            )
        })?;
        rows.push(feat);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(&nodes_path, 1, "no node rows"));
    }

    let edges_text = read_to_string(&edges_path)?;
    let mut elines = edges_text.lines().enumerate();
    let (_, eheader) = elines
        .next()
        .ok_or_else(|| parse_err(&edges_path, 1, "empty edges file"))?;
    if eheader.trim_end_matches('\r') != "src,dst" {
        return Err(parse_err(&edges_path, 1, "header must be src,dst"));
    }
    let mut report = LoadReport::default();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (lineno, raw) in elines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (src, dst) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(parse_err(&edges_path, lineno + 1, "expected src,dst")),
        };
        let a = *ids
            .get(src)
            .ok_or_else(|| parse_err(&edges_path, lineno + 1, format!("unknown node id {src:?}")))?;
        let b = *ids
            .get(dst)
            .ok_or_else(|| parse_err(&edges_path, lineno + 1, format!("unknown node id {dst:?}")))?;
        if a == b {
            report.self_loops += 1;
        } else {
            edges.push((a, b));
        }
    }

    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let graph = normalize_adjacency(CsrGraph::from_edges(rows.len(), &edges)?)?;
    let dataset = Dataset {
        features: DenseMatrix::from_rows(&rows),
        labels,
        splits: Splits::default(),
        n_classes,
    };
    Ok((graph, dataset, report))
}

/// Load a dataset. Splits are left empty; apply [`super::make_splits`]
/// afterwards. With `largest_component`, the graph and dataset are restricted
/// to the largest connected component.
pub fn load_dataset(
    format: DatasetFormat,
    path: &Path,
    largest_component: bool,
) -> Result<(CsrGraph, Dataset, LoadReport), GraphError> {
    let (graph, dataset, mut report) = match format {
        DatasetFormat::CoraRaw => load_cora_raw(path)?,
        DatasetFormat::GenericCsv => load_generic_csv(path)?,
    };
    dataset.validate()?;
    if !largest_component {
        return Ok((graph, dataset, report));
    }
    let keep = graph.largest_component();
    report.nodes_dropped = graph.node_count() - keep.len();
    if report.nodes_dropped == 0 {
        return Ok((graph, dataset, report));
    }
    let (sub, _) = induced_subgraph(&graph, &keep)?;
    let mut ds = dataset.induce(&keep);
    ds.splits = Splits::default();
    Ok((sub, ds, report))
}
