use rand_chacha::ChaCha8Rng;

use super::{hhr_layer_forward, LayerNodes, ModelConfig, ModelParams, NodeClassifier, Recorded, RelationScores};
use crate::diffcore::{DenseMatrix, NodeId, Tape};
use crate::sparsela::CompiledRelation;
use crate::{Error, Result};

/// Relation scores of every node at every layer, detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationScoreReport {
    /// Names of relations `0..=p`; index 0 is the self relation.
    pub relation_names: Vec<String>,
    /// One `N × p` matrix per layer holding `α_r` for `r = 1..=p`.
    pub layers: Vec<DenseMatrix>,
}

impl RelationScoreReport {
    /// `α` of `node` for relation `r` at `layer`; the self score is 1.
    pub fn alpha(&self, layer: usize, node: usize, r: usize) -> f64 {
        if r == 0 {
            1.0
        } else {
            self.layers[layer][[node, r - 1]]
        }
    }

    /// Scores for `r = 0..=p` divided by their sum.
    pub fn normalized(&self, layer: usize, node: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.relation_names.len()).map(|r| self.alpha(layer, node, r)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|a| a / total).collect()
    }
}

#[derive(Debug)]
pub struct ModelForward {
    pub loss: NodeId,
    pub logits: NodeId,
    pub params: Vec<NodeId>,
    pub report: RelationScoreReport,
}

fn check_inputs(config: &ModelConfig, relations: &[CompiledRelation], features: &DenseMatrix) -> Result<()> {
    if relations.len() != config.relations.len() {
        return Err(Error::invalid(format!(
            "{} compiled relations for {} configured",
            relations.len(),
            config.relations.len()
        )));
    }
    let n = features.nrows();
    for (compiled, spec) in relations.iter().zip(&config.relations) {
        if compiled.spec != *spec {
            return Err(Error::invalid(format!(
                "compiled relation {:?} does not match configured {:?}",
                compiled.name(),
                spec.name
            )));
        }
        if compiled.matrix.shape() != (n, n) {
            return Err(Error::shape(
                "model_forward",
                format!("relation {:?} is {:?} for {n} nodes", compiled.name(), compiled.matrix.shape()),
            ));
        }
    }
    Ok(())
}

/// Records the `K` layers and the classifier. Returns the logits and the
/// per-layer relation scores.
pub fn forward_logits<'a>(
    tape: &mut Tape<'a>,
    config: &ModelConfig,
    params: &ModelParams,
    relations: &'a [CompiledRelation],
    features: &'a DenseMatrix,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Recorded, Vec<RelationScores>)> {
    check_inputs(config, relations, features)?;
    let mut param_ids = Vec::with_capacity(params.tensors().len());
    let mut h = tape.constant_ref(features)?;
    let mut scores = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let nodes = LayerNodes {
            projections: layer
                .projections
                .iter()
                .map(|w| tape.param(w.clone()))
                .collect::<Result<_>>()?,
            ntn_slices: layer
                .ntn_slices
                .iter()
                .map(|s| tape.param(s.clone()))
                .collect::<Result<_>>()?,
        };
        param_ids.extend(&nodes.projections);
        param_ids.extend(&nodes.ntn_slices);
        let out = hhr_layer_forward(tape, &nodes, relations, h, config.dropout, dropout_rng.as_deref_mut())?;
        h = out.hidden;
        scores.push(out.scores);
    }
    let classifier = tape.param(params.classifier.clone())?;
    param_ids.push(classifier);
    let logits = tape.matmul(h, classifier)?;
    Ok((Recorded { logits, params: param_ids }, scores))
}

/// Forward pass plus the summed cross-entropy over `targets`
/// (`(node, class)` pairs).
pub fn model_forward<'a>(
    tape: &mut Tape<'a>,
    config: &ModelConfig,
    params: &ModelParams,
    relations: &'a [CompiledRelation],
    features: &'a DenseMatrix,
    targets: &[(usize, usize)],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ModelForward> {
    if targets.is_empty() {
        return Err(Error::invalid("loss mask is empty"));
    }
    let (rec, scores) = forward_logits(tape, config, params, relations, features, dropout_rng)?;
    let loss = tape.softmax_cross_entropy(rec.logits, targets)?;
    let report = RelationScoreReport {
        relation_names: config.relations.iter().map(|r| r.name.clone()).collect(),
        layers: scores.iter().map(|s| tape.value(s.matrix).clone()).collect(),
    };
    Ok(ModelForward {
        loss,
        logits: rec.logits,
        params: rec.params,
        report,
    })
}

/// An HHR-GNN bound to a graph's compiled relations and features.
#[derive(Clone, Debug)]
pub struct HhrNet<'g> {
    pub config: ModelConfig,
    pub params: ModelParams,
    relations: &'g [CompiledRelation],
    features: &'g DenseMatrix,
}

impl<'g> HhrNet<'g> {
    pub fn new(
        config: ModelConfig,
        params: ModelParams,
        relations: &'g [CompiledRelation],
        features: &'g DenseMatrix,
    ) -> Result<Self> {
        params.validate(&config, features.ncols())?;
        check_inputs(&config, relations, features)?;
        Ok(HhrNet {
            config,
            params,
            relations,
            features,
        })
    }

    pub fn relations(&self) -> &'g [CompiledRelation] {
        self.relations
    }

    /// Eval-mode logits and relation scores.
    pub fn explain(&self) -> Result<(DenseMatrix, RelationScoreReport)> {
        let mut tape = Tape::new();
        let (rec, scores) = forward_logits(&mut tape, &self.config, &self.params, self.relations, self.features, None)?;
        let report = RelationScoreReport {
            relation_names: self.config.relations.iter().map(|r| r.name.clone()).collect(),
            layers: scores.iter().map(|s| tape.value(s.matrix).clone()).collect(),
        };
        Ok((tape.value(rec.logits).clone(), report))
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }
}

impl NodeClassifier for HhrNet<'_> {
    fn parameters(&self) -> Vec<&DenseMatrix> {
        self.params.tensors()
    }

    fn parameters_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.params.tensors_mut()
    }

    fn record<'t>(&'t self, tape: &mut Tape<'t>, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Recorded> {
        forward_logits(tape, &self.config, &self.params, self.relations, self.features, dropout_rng)
            .map(|(rec, _)| rec)
    }
}
