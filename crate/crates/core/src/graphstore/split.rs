use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSet {
    /// Lists are non-empty, pairwise disjoint, and reference labeled nodes.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if ids.is_empty() {
                return Err(Error::invalid(format!("{name} split is empty")));
            }
            for &id in ids {
                if graph.label(id).is_none() {
                    return Err(Error::invalid(format!("{name} split contains unlabeled node {id}")));
                }
                if !seen.insert(id) {
                    return Err(Error::invalid(format!("node {id} appears in more than one split")));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Class-balanced train set of `train_per_class` nodes per class, then
/// `val_count` nodes drawn from the remaining labeled nodes; everything else
/// labeled is test. Lists are sorted.
pub fn make_splits(graph: &Graph, train_per_class: usize, val_count: usize, seed: u64) -> Result<SplitSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); graph.num_classes];
    for (&node, &label) in &graph.labels {
        by_class[label].push(node);
    }

    let mut train = Vec::new();
    let mut rest = Vec::new();
    for (class, mut nodes) in by_class.into_iter().enumerate() {
        if nodes.len() < train_per_class {
            return Err(Error::invalid(format!(
                "class {class} has {} labeled nodes, need {train_per_class} for training",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut rng);
        rest.extend_from_slice(&nodes[train_per_class..]);
        nodes.truncate(train_per_class);
        train.extend(nodes);
    }
    if train.is_empty() {
        return Err(Error::invalid("train split would be empty"));
    }
    if val_count == 0 || rest.len() <= val_count {
        return Err(Error::invalid(format!(
            "{} labeled nodes remain after training selection; need {} validation nodes plus at least one test node",
            rest.len(),
            val_count
        )));
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let mut test = rest.split_off(val_count);
    let mut val = rest;

    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSet { train, val, test })
}
