use std::cell::Cell;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CsrMatrix, Normalization};
use crate::graphstore::Graph;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RelationKind {
    /// `hops`-th power of the symmetrized base adjacency; `hops = 0` is the
    /// identity (self) relation.
    Power { hops: usize },
    /// Sum over paths of the product of per-step adjacencies. Each path lists
    /// edge type ids in traversal order starting from the aggregating node,
    /// e.g. `[AP, PC]` relates an author to the venues of its papers.
    MetaPathSum { paths: Vec<Vec<usize>> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub kind: RelationKind,
    #[serde(default)]
    pub normalization: Normalization,
    /// Replace values by one before normalizing. Unset means off for powers
    /// and on for meta-path sums.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarize: Option<bool>,
}

impl RelationSpec {
    pub fn identity() -> Self {
        RelationSpec::power("self", 0)
    }

    pub fn power(name: impl Into<String>, hops: usize) -> Self {
        RelationSpec {
            name: name.into(),
            kind: RelationKind::Power { hops },
            normalization: Normalization::Row,
            binarize: None,
        }
    }

    pub fn meta_path(name: impl Into<String>, paths: Vec<Vec<usize>>) -> Self {
        RelationSpec {
            name: name.into(),
            kind: RelationKind::MetaPathSum { paths },
            normalization: Normalization::Row,
            binarize: None,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_binarize(mut self, binarize: bool) -> Self {
        self.binarize = Some(binarize);
        self
    }

    pub fn is_identity(&self) -> bool {
        self.kind == RelationKind::Power { hops: 0 }
    }

    pub fn binarizes(&self) -> bool {
        self.binarize.unwrap_or(matches!(self.kind, RelationKind::MetaPathSum { .. }))
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if let RelationKind::MetaPathSum { paths } = &self.kind {
            if paths.is_empty() || paths.iter().any(Vec::is_empty) {
                return Err(Error::invalid(format!(
                    "relation {:?}: meta-path sum needs at least one non-empty path",
                    self.name
                )));
            }
            for &t in paths.iter().flatten() {
                if t >= graph.num_edge_types() {
                    return Err(Error::invalid(format!(
                        "relation {:?}: edge type {t} out of range ({} types)",
                        self.name,
                        graph.num_edge_types()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledRelation {
    pub spec: RelationSpec,
    pub matrix: CsrMatrix,
}

impl CompiledRelation {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn is_identity(&self) -> bool {
        self.spec.is_identity()
    }
}

thread_local! {
    static COMPILATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`compile_relation`] calls made so far on this thread.
pub fn compilations_on_current_thread() -> usize {
    COMPILATIONS.with(Cell::get)
}

/// `A[i, j] = 1` for every edge `j → i` of the given type, so row `i` lists
/// the in-neighbours of `i`. Parallel edges collapse to a single one.
pub fn build_typed_adjacency(graph: &Graph, edge_type: usize) -> Result<CsrMatrix> {
    if edge_type >= graph.num_edge_types() {
        return Err(Error::invalid(format!("edge type {edge_type} out of range")));
    }
    let n = graph.num_nodes;
    Ok(CsrMatrix::from_triplets(n, n, graph.edges_of_type(edge_type).map(|e| (e.dst, e.src, 1.0)))?.binarize())
}

/// Union of all edge types, symmetrized, binary, without self-loops.
pub fn base_adjacency(graph: &Graph) -> Result<CsrMatrix> {
    let n = graph.num_nodes;
    let triplets = graph
        .edges
        .iter()
        .filter(|e| e.src != e.dst)
        .flat_map(|e| [(e.src, e.dst, 1.0), (e.dst, e.src, 1.0)]);
    Ok(CsrMatrix::from_triplets(n, n, triplets)?.binarize())
}

/// `F[s, d] = 1` for every edge `s → d` of the type, self-loops dropped.
fn forward_adjacency(graph: &Graph, edge_type: usize) -> Result<CsrMatrix> {
    let n = graph.num_nodes;
    let triplets = graph
        .edges_of_type(edge_type)
        .filter(|e| e.src != e.dst)
        .map(|e| (e.src, e.dst, 1.0));
    Ok(CsrMatrix::from_triplets(n, n, triplets)?.binarize())
}

type Endpoints = BTreeSet<(usize, usize)>;

fn endpoint_types(graph: &Graph, edge_type: usize) -> Endpoints {
    graph
        .edges_of_type(edge_type)
        .map(|e| (graph.node_types[e.src], graph.node_types[e.dst]))
        .collect()
}

fn check_path_types(graph: &Graph, spec: &RelationSpec, path: &[usize]) -> Result<()> {
    for step in path.windows(2) {
        let (a, b) = (endpoint_types(graph, step[0]), endpoint_types(graph, step[1]));
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let ends: BTreeSet<usize> = a.iter().map(|&(_, d)| d).collect();
        if !b.iter().any(|(s, _)| ends.contains(s)) {
            return Err(Error::invalid(format!(
                "relation {:?}: edge type {:?} cannot follow {:?} (node types do not connect)",
                spec.name, graph.edge_type_names[step[1]], graph.edge_type_names[step[0]]
            )));
        }
    }
    Ok(())
}

/// Materializes a relation as an `N × N` matrix.
///
/// Powers use the symmetrized base adjacency; meta-path sums multiply
/// forward per-type adjacencies along each path and add the paths before
/// the optional binarization and normalization.
pub fn compile_relation(graph: &Graph, spec: &RelationSpec) -> Result<CompiledRelation> {
    COMPILATIONS.with(|c| c.set(c.get() + 1));
    spec.validate(graph)?;
    let n = graph.num_nodes;

    let raw = match &spec.kind {
        RelationKind::Power { hops: 0 } => CsrMatrix::identity(n),
        RelationKind::Power { hops } => {
            let base = base_adjacency(graph)?;
            let mut acc = base.clone();
            for _ in 1..*hops {
                acc = acc.matmul(&base)?;
            }
            acc
        }
        RelationKind::MetaPathSum { paths } => {
            let mut sum = CsrMatrix::zeros(n, n);
            for path in paths {
                check_path_types(graph, spec, path)?;
                let mut product = forward_adjacency(graph, path[0])?;
                for &t in &path[1..] {
                    product = product.matmul(&forward_adjacency(graph, t)?)?;
                }
                sum = sum.add(&product)?;
            }
            sum
        }
    };
    if raw.nnz() == 0 && n > 0 {
        log::warn!("relation {:?} compiled to an empty matrix", spec.name);
    }
    let raw = if spec.binarizes() { raw.binarize() } else { raw };
    Ok(CompiledRelation {
        spec: spec.clone(),
        matrix: raw.normalize(spec.normalization)?,
    })
}

pub fn compile_relations(graph: &Graph, specs: &[RelationSpec]) -> Result<Vec<CompiledRelation>> {
    specs.iter().map(|s| compile_relation(graph, s)).collect()
}
