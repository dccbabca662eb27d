//! The HHR-GNN architecture and a GCN baseline.
//!
//! One HHR layer, for relations `r = 0..=p` (relation 0 is the node itself):
//!
//! ```text
//! h_r   = relu(A_r · H · W_r)                 hop-aware projection
//! α_r   = sigmoid(rowwise h_0 · S_r · h_rᵀ)   relation score, r ≥ 1
//! H'    = [h_0 | α_1 ⊙ h_1 | … | α_p ⊙ h_p]   hop-aware concatenation
//! ```
//!
//! After `K` layers a linear classifier maps `H` to class logits and the loss
//! is the summed softmax cross-entropy over labeled nodes.

mod checkpoint;
mod config;
mod gcn;
mod layer;
mod net;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::{ModelConfig, HOP_ACTIVATION, OUTPUT_ACTIVATION, SCORE_ACTIVATION};
pub use gcn::{gcn_adjacency, gcn_layer_forward, GcnConfig, GcnNet};
pub use layer::{hhr_layer_forward, hop_representation, relation_scores, LayerNodes, LayerOutput, RelationScores};
pub use net::{forward_logits, model_forward, HhrNet, ModelForward, RelationScoreReport};
pub use params::{glorot_uniform, init_params, LayerParams, ModelParams};

use rand_chacha::ChaCha8Rng;

use crate::diffcore::{DenseMatrix, NodeId, Tape};
use crate::Result;

/// Logits node plus the tape leaves of every trainable tensor, in the order of
/// [`NodeClassifier::parameters`].
#[derive(Debug)]
pub struct Recorded {
    pub logits: NodeId,
    pub params: Vec<NodeId>,
}

/// A full-batch node classifier that can record its forward pass on a tape.
pub trait NodeClassifier {
    fn parameters(&self) -> Vec<&DenseMatrix>;

    fn parameters_mut(&mut self) -> Vec<&mut DenseMatrix>;

    /// Records a forward pass over all nodes. Dropout is active only when an
    /// rng is supplied.
    fn record<'t>(&'t self, tape: &mut Tape<'t>, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Recorded>;

    /// Eval-mode logits.
    fn logits(&self) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, None)?;
        Ok(tape.value(rec.logits).clone())
    }
}
