use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::train::targets_for;
use crate::diffcore::{finite_diff_check, DenseMatrix, Tape};
use crate::graphstore::Graph;
use crate::hhrmodel::{init_params, model_forward, ModelConfig};
use crate::sparsela::compile_relations;
use crate::{Error, Result};

/// Central-difference step for [`grad_check_model`].
pub const GRADCHECK_STEP: f64 = 1e-5;

/// A random homogeneous graph (edge probability 0.15, six features, three
/// classes, every node labeled) and a two-hop, two-layer (8, 4) model.
pub fn gradcheck_setup(num_nodes: usize, seed: u64) -> Result<(Graph, ModelConfig)> {
    if num_nodes < 2 {
        return Err(Error::invalid("gradient check needs at least two nodes"));
    }
    let classes = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = DenseMatrix::from_shape_fn((num_nodes, 6), |_| rng.sample(StandardNormal));
    let mut edges = Vec::new();
    for i in 0..num_nodes {
        for j in i + 1..num_nodes {
            if rng.random_bool(0.15) {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    let labels: BTreeMap<usize, usize> = (0..num_nodes).map(|n| (n, rng.random_range(0..classes))).collect();
    let graph = Graph::homogeneous(features, edges, labels, classes)?;
    let config = ModelConfig {
        seed,
        ..ModelConfig::homogeneous(2, vec![8, 4], classes)
    };
    Ok((graph, config))
}

/// Max relative error between tape and central-difference gradients of the
/// summed loss over every labeled node, with dropout disabled.
pub fn grad_check_model(config: &ModelConfig, graph: &Graph) -> Result<f64> {
    check_with(config, graph, |_| {})
}

fn check_with(config: &ModelConfig, graph: &Graph, prepare: impl Fn(&mut Tape)) -> Result<f64> {
    let config = ModelConfig {
        dropout: 0.0,
        ..config.clone()
    };
    config.validate()?;
    graph.validate()?;
    let relations = compile_relations(graph, &config.relations)?;
    let params = init_params(&config, graph.feature_dim())?;
    let nodes: Vec<usize> = graph.labels.keys().copied().collect();
    let targets = targets_for(graph, &nodes)?;

    let mut tape = Tape::new();
    prepare(&mut tape);
    let fwd = model_forward(&mut tape, &config, &params, &relations, &graph.features, &targets, None)?;
    let grads = tape.backward(fwd.loss)?;
    let analytic: Vec<DenseMatrix> = fwd.params.iter().map(|&p| grads.get_or_zeros(p, tape.shape(p))).collect();

    let flat: Vec<DenseMatrix> = params.tensors().into_iter().cloned().collect();
    let loss_at = |tensors: &[DenseMatrix]| -> Result<f64> {
        let p = params.with_tensors(tensors)?;
        let mut t = Tape::new();
        let f = model_forward(&mut t, &config, &p, &relations, &graph.features, &targets, None)?;
        Ok(t.value(f.loss)[[0, 0]])
    };
    finite_diff_check(loss_at, &flat, &analytic, GRADCHECK_STEP)
}
