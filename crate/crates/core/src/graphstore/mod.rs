//! Graph data model, on-disk formats, synthetic generators, and splits.
//!
//! One feature matrix is shared by every node type. Labels are partial: only
//! the nodes that carry a class appear in [`Graph::labels`].

mod generate;
mod io;
mod split;

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;

use crate::{Error, Result};

pub use generate::{generate_heterogeneous, generate_homogeneous, GenParamsHeterogeneous, GenParamsHomogeneous};
pub use io::{
    load_graph, load_splits, parse_edges, parse_features, parse_graph_meta, parse_labels,
    parse_splits, save_graph, save_splits, write_atomic, GraphMeta, EDGES_FILE, FEATURES_FILE,
    GRAPH_FILE, LABELS_FILE, SPLITS_FILE,
};
pub use split::{make_splits, SplitSet};

/// Edge type ids used by [`generate_heterogeneous`].
pub mod apc {
    pub const AUTHOR: usize = 0;
    pub const PAPER: usize = 1;
    pub const VENUE: usize = 2;

    pub const AP: usize = 0;
    pub const PA: usize = 1;
    pub const PC: usize = 2;
    pub const CP: usize = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize, edge_type: usize) -> Self {
        Edge { src, dst, edge_type }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    /// Per-node type id, indexes `node_type_names`.
    pub node_types: Vec<usize>,
    pub node_type_names: Vec<String>,
    pub edge_type_names: Vec<String>,
    pub edges: Vec<Edge>,
    /// `num_nodes × feature_dim`, row `i` belongs to node `i`.
    pub features: Array2<f64>,
    pub labels: BTreeMap<usize, usize>,
    pub num_classes: usize,
}

impl Graph {
    /// A single-type graph. `edges` are directed; callers store both
    /// directions for undirected graphs.
    pub fn homogeneous(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: BTreeMap<usize, usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let num_nodes = features.nrows();
        let graph = Graph {
            num_nodes,
            node_types: vec![0; num_nodes],
            node_type_names: vec!["node".to_owned()],
            edge_type_names: vec!["edge".to_owned()],
            edges: edges.into_iter().map(|(s, d)| Edge::new(s, d, 0)).collect(),
            features,
            labels,
            num_classes,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_edge_types(&self) -> usize {
        self.edge_type_names.len()
    }

    pub fn num_node_types(&self) -> usize {
        self.node_type_names.len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.num_node_types() == 1 && self.num_edge_types() == 1
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels.get(&node).copied()
    }

    pub fn edges_of_type(&self, edge_type: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.edge_type == edge_type)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.node_types.len() != n {
            return Err(Error::invalid(format!(
                "node_types has {} entries for {n} nodes",
                self.node_types.len()
            )));
        }
        if self.features.nrows() != n {
            return Err(Error::invalid(format!(
                "feature matrix has {} rows for {n} nodes",
                self.features.nrows()
            )));
        }
        if self.node_type_names.is_empty() || self.edge_type_names.is_empty() {
            return Err(Error::invalid("at least one node type and one edge type are required"));
        }
        if let Some((i, t)) = self
            .node_types
            .iter()
            .enumerate()
            .find(|(_, &t)| t >= self.num_node_types())
        {
            return Err(Error::invalid(format!("node {i} has out-of-range type {t}")));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::invalid(format!(
                    "edge {} -> {} has out-of-range node id (N = {n})",
                    e.src, e.dst
                )));
            }
            if e.edge_type >= self.num_edge_types() {
                return Err(Error::invalid(format!(
                    "edge {} -> {} has out-of-range edge type {}",
                    e.src, e.dst, e.edge_type
                )));
            }
            if !seen.insert(*e) {
                return Err(Error::invalid(format!(
                    "duplicate edge {} -> {} of type {}",
                    e.src, e.dst, e.edge_type
                )));
            }
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be at least 1"));
        }
        for (&node, &label) in &self.labels {
            if node >= n {
                return Err(Error::invalid(format!("label for out-of-range node id {node}")));
            }
            if label >= self.num_classes {
                return Err(Error::invalid(format!(
                    "node {node} has label {label}, but num_classes = {}",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }
}
