//! Synthetic benchmark graphs.
//!
//! Class `c` has mean vector `m_c[j] = 1` when `j % num_classes == c`, else
//! 0. A node's features are `signal * m_c + N(0, I)`.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{apc, Edge, Graph};
use crate::{Error, Result};

/// Planted-partition (stochastic block model) parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParamsHomogeneous {
    pub nodes_per_class: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub signal: f64,
    pub seed: u64,
}

impl Default for GenParamsHomogeneous {
    fn default() -> Self {
        GenParamsHomogeneous {
            nodes_per_class: 100,
            num_classes: 3,
            p_in: 0.10,
            p_out: 0.01,
            feature_dim: 16,
            signal: 0.5,
            seed: 0,
        }
    }
}

/// Author–paper–venue graph with three node types and four edge types
/// (`AP`, `PA`, `PC`, `CP`). Authors carry the labels.
///
/// Papers and venues are split into `num_classes` pools by `id % num_classes`.
/// An author links to each paper of its own class pool with probability
/// `p_ap_in` and to every other paper with probability `p_ap_out`. Each paper
/// appears at exactly one venue: with probability `venue_purity` a uniform
/// pick from its own pool, otherwise a uniform pick from all venues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParamsHeterogeneous {
    pub authors_per_class: usize,
    pub num_classes: usize,
    pub papers: usize,
    pub venues: usize,
    pub p_ap_in: f64,
    pub p_ap_out: f64,
    pub venue_purity: f64,
    pub feature_dim: usize,
    /// Class-mean scale for paper and venue features.
    pub signal: f64,
    /// Class-mean scale for author features.
    pub author_signal: f64,
    pub seed: u64,
}

impl Default for GenParamsHeterogeneous {
    fn default() -> Self {
        GenParamsHeterogeneous {
            authors_per_class: 50,
            num_classes: 3,
            papers: 120,
            venues: 6,
            p_ap_in: 0.15,
            p_ap_out: 0.01,
            venue_purity: 0.8,
            feature_dim: 16,
            signal: 1.0,
            author_signal: 0.25,
            seed: 0,
        }
    }
}

impl GenParamsHeterogeneous {
    /// Expected number of author→paper edges.
    pub fn expected_ap_edges(&self) -> f64 {
        (0..self.num_classes)
            .map(|c| {
                let pool = (0..self.papers).filter(|p| p % self.num_classes == c).count() as f64;
                let others = self.papers as f64 - pool;
                self.authors_per_class as f64 * (pool * self.p_ap_in + others * self.p_ap_out)
            })
            .sum()
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn class_mean(class: usize, dim: usize, num_classes: usize) -> f64 {
    if dim % num_classes == class {
        1.0
    } else {
        0.0
    }
}

fn fill_features(
    features: &mut Array2<f64>,
    node: usize,
    class: usize,
    num_classes: usize,
    signal: f64,
    rng: &mut ChaCha8Rng,
) {
    for (j, v) in features.row_mut(node).iter_mut().enumerate() {
        let noise: f64 = rng.sample(StandardNormal);
        *v = signal * class_mean(class, j, num_classes) + noise;
    }
}

/// Undirected planted-partition graph; every undirected edge is stored in both
/// directions. Nodes are class-major: node `i` has class `i / nodes_per_class`.
pub fn generate_homogeneous(params: &GenParamsHomogeneous) -> Result<Graph> {
    let GenParamsHomogeneous {
        nodes_per_class,
        num_classes,
        p_in,
        p_out,
        feature_dim,
        signal,
        seed,
    } = *params;
    if nodes_per_class == 0 || num_classes == 0 || feature_dim == 0 {
        return Err(Error::invalid("nodes_per_class, num_classes and feature_dim must be positive"));
    }
    check_prob("p_in", p_in)?;
    check_prob("p_out", p_out)?;
    if p_in <= p_out {
        return Err(Error::invalid(format!("p_in ({p_in}) must exceed p_out ({p_out})")));
    }
    if signal.is_nan() || signal < 0.0 {
        return Err(Error::invalid("signal must be non-negative"));
    }

    let n = nodes_per_class * num_classes;
    let class_of = |i: usize| i / nodes_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if class_of(i) == class_of(j) { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push(Edge::new(i, j, 0));
                edges.push(Edge::new(j, i, 0));
            }
        }
    }

    let mut features = Array2::zeros((n, feature_dim));
    for i in 0..n {
        fill_features(&mut features, i, class_of(i), num_classes, signal, &mut rng);
    }
    let labels: BTreeMap<usize, usize> = (0..n).map(|i| (i, class_of(i))).collect();

    let graph = Graph {
        num_nodes: n,
        node_types: vec![0; n],
        node_type_names: vec!["node".to_owned()],
        edge_type_names: vec!["edge".to_owned()],
        edges,
        features,
        labels,
        num_classes,
    };
    graph.validate()?;
    Ok(graph)
}

/// Layout: authors `[0, A)`, papers `[A, A + P)`, venues after that. Author
/// `a` has class `a / authors_per_class`.
pub fn generate_heterogeneous(params: &GenParamsHeterogeneous) -> Result<Graph> {
    let p = params;
    if p.authors_per_class == 0 || p.num_classes == 0 || p.feature_dim == 0 {
        return Err(Error::invalid(
            "authors_per_class, num_classes and feature_dim must be positive",
        ));
    }
    if p.papers < p.num_classes || p.venues < p.num_classes {
        return Err(Error::invalid("need at least one paper and one venue per class"));
    }
    check_prob("p_ap_in", p.p_ap_in)?;
    check_prob("p_ap_out", p.p_ap_out)?;
    check_prob("venue_purity", p.venue_purity)?;
    if p.p_ap_in <= p.p_ap_out {
        return Err(Error::invalid("p_ap_in must exceed p_ap_out"));
    }
    if !(p.signal >= 0.0 && p.author_signal >= 0.0) {
        return Err(Error::invalid("signal must be non-negative"));
    }

    let k = p.num_classes;
    let authors = p.authors_per_class * k;
    let paper0 = authors;
    let venue0 = authors + p.papers;
    let n = venue0 + p.venues;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut edges = Vec::new();
    for a in 0..authors {
        let class = a / p.authors_per_class;
        for paper in 0..p.papers {
            let prob = if paper % k == class { p.p_ap_in } else { p.p_ap_out };
            if rng.random_bool(prob) {
                edges.push(Edge::new(a, paper0 + paper, apc::AP));
                edges.push(Edge::new(paper0 + paper, a, apc::PA));
            }
        }
    }

    let all_venues: Vec<usize> = (0..p.venues).collect();
    let pools: Vec<Vec<usize>> = (0..k)
        .map(|c| all_venues.iter().copied().filter(|v| v % k == c).collect())
        .collect();
    for paper in 0..p.papers {
        let candidates = if rng.random_bool(p.venue_purity) {
            &pools[paper % k]
        } else {
            &all_venues
        };
        let venue = *candidates.choose(&mut rng).expect("pools are non-empty");
        edges.push(Edge::new(paper0 + paper, venue0 + venue, apc::PC));
        edges.push(Edge::new(venue0 + venue, paper0 + paper, apc::CP));
    }

    let mut features = Array2::zeros((n, p.feature_dim));
    let mut node_types = Vec::with_capacity(n);
    for a in 0..authors {
        fill_features(&mut features, a, a / p.authors_per_class, k, p.author_signal, &mut rng);
        node_types.push(apc::AUTHOR);
    }
    for paper in 0..p.papers {
        fill_features(&mut features, paper0 + paper, paper % k, k, p.signal, &mut rng);
        node_types.push(apc::PAPER);
    }
    for venue in 0..p.venues {
        fill_features(&mut features, venue0 + venue, venue % k, k, p.signal, &mut rng);
        node_types.push(apc::VENUE);
    }

    let labels = (0..authors).map(|a| (a, a / p.authors_per_class)).collect();
    let graph = Graph {
        num_nodes: n,
        node_types,
        node_type_names: ["A", "P", "C"].map(String::from).to_vec(),
        edge_type_names: ["AP", "PA", "PC", "CP"].map(String::from).to_vec(),
        edges,
        features,
        labels,
        num_classes: k,
    };
    graph.validate()?;
    Ok(graph)
}
