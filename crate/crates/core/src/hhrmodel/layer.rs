use rand_chacha::ChaCha8Rng;

use super::{HOP_ACTIVATION, OUTPUT_ACTIVATION, SCORE_ACTIVATION};
use crate::diffcore::{NodeId, Tape};
use crate::sparsela::CompiledRelation;
use crate::{Error, Result};

/// Tape leaves of one layer's parameters.
#[derive(Clone, Debug)]
pub struct LayerNodes {
    pub projections: Vec<NodeId>,
    pub ntn_slices: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct RelationScores {
    /// `N × p` score matrix.
    pub matrix: NodeId,
    /// The same scores as `p` separate `N × 1` columns.
    pub columns: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct LayerOutput {
    /// `N × (p + 1)·d_k`.
    pub hidden: NodeId,
    pub scores: RelationScores,
}

/// `relu(A_r · H · W_r)`; the identity relation skips the sparse product.
pub fn hop_representation<'a>(
    tape: &mut Tape<'a>,
    h_prev: NodeId,
    relation: &'a CompiledRelation,
    w: NodeId,
) -> Result<NodeId> {
    let pre = if relation.is_identity() {
        tape.matmul(h_prev, w)?
    } else {
        let (in_dim, out_dim) = tape.shape(w);
        // Same product either way; multiply by the narrower side first.
        if out_dim < in_dim {
            let hw = tape.matmul(h_prev, w)?;
            tape.spmm(&relation.matrix, hw)?
        } else {
            let ah = tape.spmm(&relation.matrix, h_prev)?;
            tape.matmul(ah, w)?
        }
    };
    tape.activation(pre, HOP_ACTIVATION)
}

/// `α[:, r] = sigmoid(rowwise h0 · S_r · h_rᵀ)` for each non-self relation.
pub fn relation_scores(
    tape: &mut Tape<'_>,
    h0: NodeId,
    hop_reps: &[NodeId],
    ntn_slices: &[NodeId],
) -> Result<RelationScores> {
    if hop_reps.len() != ntn_slices.len() {
        return Err(Error::shape(
            "relation_scores",
            format!("{} hop representations but {} tensor slices", hop_reps.len(), ntn_slices.len()),
        ));
    }
    let columns = hop_reps
        .iter()
        .zip(ntn_slices)
        .map(|(&hr, &slice)| {
            let raw = tape.batched_bilinear(h0, hr, slice)?;
            tape.activation(raw, SCORE_ACTIVATION)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = tape.concat_cols(&columns)?;
    Ok(RelationScores { matrix, columns })
}

/// One HHR layer: dropout on the input, hop projections, relation scores,
/// and score-weighted concatenation.
pub fn hhr_layer_forward<'a>(
    tape: &mut Tape<'a>,
    layer: &LayerNodes,
    relations: &'a [CompiledRelation],
    h_prev: NodeId,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LayerOutput> {
    if relations.len() != layer.projections.len() || layer.ntn_slices.len() + 1 != relations.len() {
        return Err(Error::shape(
            "hhr_layer_forward",
            format!(
                "{} relations, {} projections, {} tensor slices",
                relations.len(),
                layer.projections.len(),
                layer.ntn_slices.len()
            ),
        ));
    }
    let input = match rng {
        Some(rng) => tape.dropout(h_prev, dropout, true, rng)?,
        None => h_prev,
    };
    let hops = relations
        .iter()
        .zip(&layer.projections)
        .map(|(rel, &w)| hop_representation(tape, input, rel, w))
        .collect::<Result<Vec<_>>>()?;
    let scores = relation_scores(tape, hops[0], &hops[1..], &layer.ntn_slices)?;

    let mut blocks = Vec::with_capacity(hops.len());
    blocks.push(hops[0]);
    for (&h, &alpha) in hops[1..].iter().zip(&scores.columns) {
        blocks.push(tape.row_scale(h, alpha)?);
    }
    let concat = tape.concat_cols(&blocks)?;
    let hidden = tape.activation(concat, OUTPUT_ACTIVATION)?;
    Ok(LayerOutput { hidden, scores })
}
