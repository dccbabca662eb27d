use serde::{Deserialize, Serialize};

use crate::diffcore::Activation;
use crate::sparsela::RelationSpec;
use crate::{Error, Result};

/// Activation on every hop representation.
pub const HOP_ACTIVATION: Activation = Activation::Relu;
/// Squashes bilinear scores into `(0, 1)`.
pub const SCORE_ACTIVATION: Activation = Activation::Sigmoid;
/// Applied to the concatenated layer output. Its inputs are relu outputs
/// scaled by positive scores, so a relu here would do nothing.
pub const OUTPUT_ACTIVATION: Activation = Activation::Identity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `relations[0]` must be the identity relation.
    pub relations: Vec<RelationSpec>,
    /// Per-hop output width `d_k` of each layer.
    pub layer_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// Self plus powers `1..=hops` of the adjacency.
    pub fn homogeneous(hops: usize, layer_dims: Vec<usize>, num_classes: usize) -> Self {
        let mut relations = vec![RelationSpec::identity()];
        relations.extend((1..=hops).map(|r| RelationSpec::power(format!("hop{r}"), r)));
        ModelConfig {
            relations,
            layer_dims,
            num_classes,
            dropout: 0.0,
            seed: 0,
        }
    }

    /// Number of non-self relations `p`.
    pub fn hops(&self) -> usize {
        self.relations.len().saturating_sub(1)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    /// Input width of layer `k` (0-based).
    pub fn layer_input_dim(&self, k: usize, feature_dim: usize) -> usize {
        if k == 0 {
            feature_dim
        } else {
            (self.hops() + 1) * self.layer_dims[k - 1]
        }
    }

    pub fn classifier_input_dim(&self) -> usize {
        (self.hops() + 1) * self.layer_dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        match self.relations.first() {
            Some(r) if r.is_identity() => {}
            _ => return Err(Error::invalid("relations[0] must be the identity relation (power 0)")),
        }
        if self.hops() == 0 {
            return Err(Error::invalid("at least one relation besides self is required"));
        }
        if let Some(r) = self.relations[1..].iter().find(|r| r.is_identity()) {
            return Err(Error::invalid(format!("relation {:?} duplicates the self relation", r.name)));
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err(Error::invalid("layer_dims must be non-empty and positive"));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
