//! Two-layer GCN baseline: `logits = Â · relu(Â X W1) · W2` with
//! `Â = D^-1/2 (A + I) D^-1/2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, NodeClassifier, Recorded, HOP_ACTIVATION};
use crate::diffcore::{DenseMatrix, NodeId, Tape};
use crate::graphstore::Graph;
use crate::sparsela::{base_adjacency, CsrMatrix, Normalization};
use crate::{Error, Result};

/// Symmetrically normalized adjacency with self-loops.
pub fn gcn_adjacency(graph: &Graph) -> Result<CsrMatrix> {
    base_adjacency(graph)?
        .add(&CsrMatrix::identity(graph.num_nodes))?
        .normalize(Normalization::Symmetric)
}

/// `relu(Â · H · W)`.
pub fn gcn_layer_forward<'a>(tape: &mut Tape<'a>, adjacency: &'a CsrMatrix, h_prev: NodeId, w: NodeId) -> Result<NodeId> {
    let ah = tape.spmm(adjacency, h_prev)?;
    let pre = tape.matmul(ah, w)?;
    tape.activation(pre, HOP_ACTIVATION)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden: 16,
            dropout: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GcnNet<'g> {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    dropout: f64,
    adjacency: &'g CsrMatrix,
    features: &'g DenseMatrix,
}

impl<'g> GcnNet<'g> {
    pub fn new(
        config: &GcnConfig,
        num_classes: usize,
        adjacency: &'g CsrMatrix,
        features: &'g DenseMatrix,
    ) -> Result<Self> {
        let n = features.nrows();
        if adjacency.shape() != (n, n) {
            return Err(Error::shape("gcn", format!("adjacency {:?} for {n} nodes", adjacency.shape())));
        }
        if config.hidden == 0 || num_classes == 0 || !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::invalid("gcn needs hidden >= 1, classes >= 1 and dropout in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(GcnNet {
            w1: glorot_uniform(features.ncols(), config.hidden, &mut rng),
            w2: glorot_uniform(config.hidden, num_classes, &mut rng),
            dropout: config.dropout,
            adjacency,
            features,
        })
    }
}

impl NodeClassifier for GcnNet<'_> {
    fn parameters(&self) -> Vec<&DenseMatrix> {
        vec![&self.w1, &self.w2]
    }

    fn parameters_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.w1, &mut self.w2]
    }

    fn record<'t>(&'t self, tape: &mut Tape<'t>, mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Recorded> {
        let w1 = tape.param(self.w1.clone())?;
        let w2 = tape.param(self.w2.clone())?;
        let mut x = tape.constant_ref(self.features)?;
        if let Some(rng) = dropout_rng.as_deref_mut() {
            x = tape.dropout(x, self.dropout, true, rng)?;
        }
        let mut h = gcn_layer_forward(tape, self.adjacency, x, w1)?;
        if let Some(rng) = dropout_rng {
            h = tape.dropout(h, self.dropout, true, rng)?;
        }
        let hw = tape.matmul(h, w2)?;
        let logits = tape.spmm(self.adjacency, hw)?;
        Ok(Recorded {
            logits,
            params: vec![w1, w2],
        })
    }
}
