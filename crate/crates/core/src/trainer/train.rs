use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, OptimHyper};
use super::early_stop::{EarlyStopping, Verdict};
use super::metrics::{compute_metrics, predict, Metrics};
use crate::diffcore::{DenseMatrix, Tape};
use crate::graphstore::{Graph, SplitSet};
use crate::hhrmodel::{init_params, HhrNet, ModelConfig, ModelParams, NodeClassifier};
use crate::sparsela::{compile_relations, CompiledRelation};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub epoch_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

/// Trained HHR-GNN parameters plus the relations they were trained against.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub params: ModelParams,
    pub outcome: TrainOutcome,
    pub relations: Vec<CompiledRelation>,
}

/// `(node, class)` pairs for every node of `mask`; unlabeled nodes are an error.
pub fn targets_for(graph: &Graph, mask: &[usize]) -> Result<Vec<(usize, usize)>> {
    mask.iter()
        .map(|&n| {
            graph
                .label(n)
                .map(|c| (n, c))
                .ok_or_else(|| Error::invalid(format!("node {n} in mask has no label")))
        })
        .collect()
}

fn summed_loss(logits: &DenseMatrix, targets: &[(usize, usize)]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant_ref(logits)?;
    let loss = tape.softmax_cross_entropy(l, targets)?;
    Ok(tape.value(loss)[[0, 0]])
}

fn metrics_from_logits(logits: &DenseMatrix, targets: &[(usize, usize)], num_classes: usize) -> Result<Metrics> {
    let nodes: Vec<usize> = targets.iter().map(|t| t.0).collect();
    let truth: Vec<usize> = targets.iter().map(|t| t.1).collect();
    let loss = summed_loss(logits, targets)?;
    compute_metrics(&predict(logits, &nodes), &truth, num_classes, loss)
}

/// Eval-mode metrics over `mask`. Leaves the model untouched.
pub fn evaluate<M: NodeClassifier + ?Sized>(model: &M, graph: &Graph, mask: &[usize]) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(Error::invalid("evaluation mask is empty"));
    }
    let targets = targets_for(graph, mask)?;
    metrics_from_logits(&model.logits()?, &targets, graph.num_classes)
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Diverged { epoch, loss: f64::NAN },
        other => other,
    }
}

/// Full-batch Adam on the training split with early stopping on validation
/// accuracy. The best validation snapshot is restored before returning.
/// `dropout_seed` drives the dropout masks only.
pub fn train_model<M: NodeClassifier>(
    model: &mut M,
    graph: &Graph,
    splits: &SplitSet,
    hyper: &OptimHyper,
    dropout_seed: u64,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    splits.validate(graph)?;
    let train_targets = targets_for(graph, &splits.train)?;
    let val_targets = targets_for(graph, &splits.val)?;
    if val_targets.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.parameters());
    let mut stopper = EarlyStopping::new(hyper.patience);
    let mut best: Vec<DenseMatrix> = model.parameters().into_iter().cloned().collect();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..hyper.max_epochs {
        let started = Instant::now();
        let (train_loss, grads) = {
            let mut tape = Tape::new();
            let rec = model.record(&mut tape, Some(&mut rng)).map_err(|e| diverged(epoch, e))?;
            let loss = tape
                .softmax_cross_entropy(rec.logits, &train_targets)
                .map_err(|e| diverged(epoch, e))?;
            let value = tape.value(loss)[[0, 0]];
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            let g = tape.backward(loss).map_err(|e| diverged(epoch, e))?;
            let grads: Vec<DenseMatrix> = rec.params.iter().map(|&p| g.get_or_zeros(p, tape.shape(p))).collect();
            (value, grads)
        };
        adam_step(&mut model.parameters_mut(), &grads, &mut adam, hyper)?;

        let logits = model.logits().map_err(|e| diverged(epoch, e))?;
        let val = metrics_from_logits(&logits, &val_targets, graph.num_classes)?;
        let verdict = stopper.observe(epoch, val.accuracy, val.loss);
        if verdict == Verdict::Improved {
            for (dst, src) in best.iter_mut().zip(model.parameters()) {
                dst.assign(src);
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy: val.accuracy,
            val_macro_f1: val.macro_f1,
            epoch_seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: loss {train_loss:.4} val acc {:.4}", val.accuracy);
        if verdict == Verdict::Stop {
            stopped_early = true;
            break;
        }
    }

    for (dst, src) in model.parameters_mut().into_iter().zip(&best) {
        dst.assign(src);
    }
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch(),
        best_val_accuracy: stopper.best_accuracy().unwrap_or(0.0),
        stopped_early,
    })
}

/// Trains a freshly initialised HHR-GNN against already compiled relations.
pub fn train_with_relations(
    graph: &Graph,
    splits: &SplitSet,
    config: &ModelConfig,
    hyper: &OptimHyper,
    relations: &[CompiledRelation],
) -> Result<(ModelParams, TrainOutcome)> {
    let params = init_params(config, graph.feature_dim())?;
    let mut net = HhrNet::new(config.clone(), params, relations, &graph.features)?;
    let outcome = train_model(&mut net, graph, splits, hyper, config.seed)?;
    Ok((net.into_params(), outcome))
}

/// Compiles the configured relations once, then trains.
pub fn train(graph: &Graph, splits: &SplitSet, config: &ModelConfig, hyper: &OptimHyper) -> Result<TrainRun> {
    config.validate()?;
    let relations = compile_relations(graph, &config.relations)?;
    let (params, outcome) = train_with_relations(graph, splits, config, hyper, &relations)?;
    Ok(TrainRun {
        params,
        outcome,
        relations,
    })
}
