//! Directory format:
//!
//! ```text
//! graph.json    {"num_nodes", "feature_dim", "num_classes", "node_types",
//!                "edge_type_names", "node_type_names"}
//! features.csv  N lines of D comma-separated reals, line i = node i
//! edges.tsv     src<TAB>dst<TAB>edge_type, 0-based, directed
//! labels.csv    node_id,label (labeled nodes only)
//! splits.json   {"train": [...], "val": [...], "test": [...]}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Edge, Graph, SplitSet};
use crate::{Error, Result};

pub const GRAPH_FILE: &str = "graph.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub node_types: Vec<usize>,
    pub edge_type_names: Vec<String>,
    pub node_type_names: Vec<String>,
}

pub fn parse_graph_meta(text: &str) -> Result<GraphMeta> {
    let meta: GraphMeta = serde_json::from_str(text).map_err(|source| Error::Json {
        file: GRAPH_FILE.to_owned(),
        source,
    })?;
    if meta.node_types.len() != meta.num_nodes {
        return Err(Error::invalid(format!(
            "{GRAPH_FILE}: node_types has {} entries but num_nodes = {}",
            meta.node_types.len(),
            meta.num_nodes
        )));
    }
    if meta.feature_dim == 0 {
        return Err(Error::invalid(format!("{GRAPH_FILE}: feature_dim must be at least 1")));
    }
    Ok(meta)
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_owned(),
        line,
        msg: msg.into(),
    }
}

fn parse_index(file: &str, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("bad {what} {field:?}")))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses `features.csv` into an `num_nodes × feature_dim` matrix.
pub fn parse_features(text: &str, num_nodes: usize, feature_dim: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(num_nodes.saturating_mul(feature_dim).min(1 << 24));
    let mut rows = 0;
    for (lineno, line) in content_lines(text) {
        if rows == num_nodes {
            return Err(parse_err(
                FEATURES_FILE,
                lineno,
                format!("more than num_nodes = {num_nodes} rows"),
            ));
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(FEATURES_FILE, lineno, format!("bad real {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(FEATURES_FILE, lineno, "non-finite value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        if width != feature_dim {
            return Err(parse_err(
                FEATURES_FILE,
                lineno,
                format!("{width} columns, expected feature_dim = {feature_dim}"),
            ));
        }
        rows += 1;
    }
    if rows != num_nodes {
        return Err(Error::invalid(format!(
            "{FEATURES_FILE}: {rows} rows, expected num_nodes = {num_nodes}"
        )));
    }
    Ok(Array2::from_shape_vec((num_nodes, feature_dim), data).expect("row count checked"))
}

/// Parses `edges.tsv`. Range checks happen when the graph is assembled.
pub fn parse_edges(text: &str) -> Result<Vec<Edge>> {
    content_lines(text)
        .map(|(lineno, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    EDGES_FILE,
                    lineno,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            Ok(Edge {
                src: parse_index(EDGES_FILE, lineno, fields[0], "node id")?,
                dst: parse_index(EDGES_FILE, lineno, fields[1], "node id")?,
                edge_type: parse_index(EDGES_FILE, lineno, fields[2], "edge type")?,
            })
        })
        .collect()
}

/// Parses `labels.csv` into `(node, label)` pairs in file order.
pub fn parse_labels(text: &str) -> Result<Vec<(usize, usize)>> {
    content_lines(text)
        .map(|(lineno, line)| {
            let (node, label) = line
                .split_once(',')
                .ok_or_else(|| parse_err(LABELS_FILE, lineno, "expected node_id,label"))?;
            Ok((
                parse_index(LABELS_FILE, lineno, node, "node id")?,
                parse_index(LABELS_FILE, lineno, label, "label")?,
            ))
        })
        .collect()
}

pub fn parse_splits(text: &str) -> Result<SplitSet> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        file: SPLITS_FILE.to_owned(),
        source,
    })
}

impl Graph {
    /// Assembles a graph from parsed file contents and validates it.
    pub fn from_parts(
        meta: GraphMeta,
        features: Array2<f64>,
        edges: Vec<Edge>,
        labels: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if features.dim() != (meta.num_nodes, meta.feature_dim) {
            return Err(Error::invalid(format!(
                "feature matrix is {:?}, {GRAPH_FILE} declares {}x{}",
                features.dim(),
                meta.num_nodes,
                meta.feature_dim
            )));
        }
        let mut label_map = BTreeMap::new();
        for (node, label) in labels {
            if label_map.insert(node, label).is_some() {
                return Err(Error::invalid(format!("{LABELS_FILE}: node {node} labeled twice")));
            }
        }
        let graph = Graph {
            num_nodes: meta.num_nodes,
            node_types: meta.node_types,
            node_type_names: meta.node_type_names,
            edge_type_names: meta.edge_type_names,
            edges,
            features,
            labels: label_map,
            num_classes: meta.num_classes,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn meta(&self) -> GraphMeta {
        GraphMeta {
            num_nodes: self.num_nodes,
            feature_dim: self.feature_dim(),
            num_classes: self.num_classes,
            node_types: self.node_types.clone(),
            edge_type_names: self.edge_type_names.clone(),
            node_type_names: self.node_type_names.clone(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta = parse_graph_meta(&read(&dir.join(GRAPH_FILE))?)?;
    let features = parse_features(
        &read(&dir.join(FEATURES_FILE))?,
        meta.num_nodes,
        meta.feature_dim,
    )?;
    let edges = parse_edges(&read(&dir.join(EDGES_FILE))?)?;
    let labels = parse_labels(&read(&dir.join(LABELS_FILE))?)?;
    Graph::from_parts(meta, features, edges, labels)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so the target is either complete or absent.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_graph(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = serde_json::to_string_pretty(&graph.meta()).expect("graph meta serializes");
    write_atomic(dir.join(GRAPH_FILE), meta.as_bytes())?;

    let mut features = String::new();
    for row in graph.features.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                features.push(',');
            }
            // `Display` for f64 is the shortest representation that parses
            // back to the same value.
            write!(features, "{v}").unwrap();
        }
        features.push('\n');
    }
    write_atomic(dir.join(FEATURES_FILE), features.as_bytes())?;

    let mut edges = String::new();
    for e in &graph.edges {
        writeln!(edges, "{}\t{}\t{}", e.src, e.dst, e.edge_type).unwrap();
    }
    write_atomic(dir.join(EDGES_FILE), edges.as_bytes())?;

    let mut labels = String::new();
    for (node, label) in &graph.labels {
        writeln!(labels, "{node},{label}").unwrap();
    }
    write_atomic(dir.join(LABELS_FILE), labels.as_bytes())
}

pub fn save_splits(splits: &SplitSet, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string(splits).expect("splits serialize");
    write_atomic(path, text.as_bytes())
}

pub fn load_splits(path: impl AsRef<Path>) -> Result<SplitSet> {
    parse_splits(&read(path.as_ref())?)
}
