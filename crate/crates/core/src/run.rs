//! End-to-end runs: JSON run configuration, training into an output
//! directory, checkpoint evaluation and relation-score export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graphstore::{load_splits, make_splits, save_splits, write_atomic, Graph, SplitSet};
use crate::hhrmodel::{Checkpoint, HhrNet, ModelConfig, RelationScoreReport};
use crate::sparsela::{compile_relations, CompiledRelation, RelationSpec};
use crate::trainer::{evaluate, train_with_relations, EpochRecord, Metrics, OptimHyper};
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RELATION_SCORES_FILE: &str = "relation_scores.csv";
pub const SPLITS_FILE: &str = "splits.json";

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_accuracy,val_macro_f1,epoch_seconds";
pub const RELATION_SCORES_HEADER: &str = "node_id,layer,relation_name,alpha_raw,alpha_normalized";

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_train_per_class() -> usize {
    20
}

fn default_val_count() -> usize {
    100
}

/// One JSON document describing a training run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub relations: Vec<RelationSpec>,
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub optim: OptimHyper,
    /// Used when the data directory carries no `splits.json`.
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_val_count")]
    pub val_count: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, "<run config>")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn parse(text: &str, file: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Json {
            file: file.to_owned(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Graph-independent checks.
    pub fn validate(&self) -> Result<()> {
        self.model_config(1, 0).validate()?;
        self.optim.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::invalid("seeds must be distinct"));
        }
        if self.train_per_class == 0 || self.val_count == 0 {
            return Err(Error::invalid("train_per_class and val_count must be positive"));
        }
        Ok(())
    }

    pub fn model_config(&self, num_classes: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            relations: self.relations.clone(),
            layer_dims: self.layer_dims.clone(),
            num_classes,
            dropout: self.dropout,
            seed,
        }
    }
}

/// Contents of a per-seed `metrics.json`. Holds no timings, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_accuracy: f64,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub test_accuracy: f64,
    pub test_macro_f1: f64,
}

/// Top-level `metrics.json` of a multi-seed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub runs: Vec<SeedSummary>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

/// Result of one seed of [`train_to_dir`].
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub metrics: RunMetrics,
    pub dir: PathBuf,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_accuracy, r.val_macro_f1, r.epoch_seconds
        )
        .unwrap();
    }
    out
}

/// The splits a run trains on: `DATA/splits.json` when present, otherwise
/// drawn from the config's split parameters.
pub fn resolve_splits(graph: &Graph, data_dir: Option<&Path>, config: &RunConfig) -> Result<SplitSet> {
    if let Some(path) = data_dir.map(|d| d.join(SPLITS_FILE)).filter(|p| p.is_file()) {
        let splits = load_splits(&path)?;
        splits.validate(graph)?;
        return Ok(splits);
    }
    make_splits(graph, config.train_per_class, config.val_count, config.split_seed)
}

/// Trains one model per seed and writes `checkpoint.json`, `history.csv`,
/// `metrics.json`, `relation_scores.csv` (all nodes) and `splits.json`.
/// A single seed writes into `out_dir`; several seeds write into
/// `out_dir/seed-<s>` plus an aggregate `out_dir/metrics.json`. Relations
/// are compiled once for all seeds.
pub fn train_to_dir(graph: &Graph, splits: &SplitSet, config: &RunConfig, out_dir: &Path) -> Result<Vec<SeedRun>> {
    config.validate()?;
    splits.validate(graph)?;
    let relations = compile_relations(graph, &config.relations)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let multi = config.seeds.len() > 1;
    let all_nodes: Vec<usize> = (0..graph.num_nodes).collect();

    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = if multi { out_dir.join(format!("seed-{seed}")) } else { out_dir.to_owned() };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let model_config = config.model_config(graph.num_classes, seed);
        let (params, outcome) = train_with_relations(graph, splits, &model_config, &config.optim, &relations)?;
        let net = HhrNet::new(model_config.clone(), params, &relations, &graph.features)?;
        let test = evaluate(&net, graph, &splits.test)?;
        let (_, report) = net.explain()?;
        let metrics = RunMetrics {
            seed,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.history.len(),
            best_val_accuracy: outcome.best_val_accuracy,
            test,
        };
        let checkpoint = Checkpoint {
            config: model_config,
            params: net.into_params(),
        };
        write_atomic(dir.join(CHECKPOINT_FILE), checkpoint.to_json().as_bytes())?;
        write_atomic(dir.join(HISTORY_FILE), history_csv(&outcome.history).as_bytes())?;
        write_atomic(dir.join(METRICS_FILE), to_json_pretty(&metrics).as_bytes())?;
        write_atomic(dir.join(RELATION_SCORES_FILE), relation_scores_csv(&report, &all_nodes)?.as_bytes())?;
        save_splits(splits, dir.join(SPLITS_FILE))?;
        log::info!(
            "seed {seed}: best epoch {}, test accuracy {:.4}, macro-F1 {:.4}",
            metrics.best_epoch,
            metrics.test.accuracy,
            metrics.test.macro_f1
        );
        runs.push(SeedRun {
            checkpoint,
            history: outcome.history,
            metrics,
            dir,
        });
    }

    if multi {
        let summaries: Vec<SeedSummary> = runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.metrics.seed,
                best_epoch: r.metrics.best_epoch,
                test_accuracy: r.metrics.test.accuracy,
                test_macro_f1: r.metrics.test.macro_f1,
            })
            .collect();
        let acc: Vec<f64> = summaries.iter().map(|s| s.test_accuracy).collect();
        let f1: Vec<f64> = summaries.iter().map(|s| s.test_macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_macro_f1, std_macro_f1) = mean_std(&f1);
        let aggregate = AggregateMetrics {
            runs: summaries,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            std_macro_f1,
        };
        write_atomic(out_dir.join(METRICS_FILE), to_json_pretty(&aggregate).as_bytes())?;
    }
    Ok(runs)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}

/// Compiles the checkpoint's relations on `graph` after checking that the
/// two agree on feature width and class count.
pub fn compile_for_checkpoint(graph: &Graph, checkpoint: &Checkpoint) -> Result<Vec<CompiledRelation>> {
    if checkpoint.feature_dim() != graph.feature_dim() {
        return Err(Error::invalid(format!(
            "model expects {} features, graph has {}",
            checkpoint.feature_dim(),
            graph.feature_dim()
        )));
    }
    if checkpoint.config.num_classes != graph.num_classes {
        return Err(Error::invalid(format!(
            "model predicts {} classes, graph has {}",
            checkpoint.config.num_classes, graph.num_classes
        )));
    }
    compile_relations(graph, &checkpoint.config.relations)
}

pub fn evaluate_checkpoint(graph: &Graph, checkpoint: &Checkpoint, mask: &[usize]) -> Result<Metrics> {
    let relations = compile_for_checkpoint(graph, checkpoint)?;
    let net = HhrNet::new(checkpoint.config.clone(), checkpoint.params.clone(), &relations, &graph.features)?;
    evaluate(&net, graph, mask)
}

/// Parses `0-19,25,40-42` (inclusive ranges) or `all` into sorted, distinct
/// node ids below `num_nodes`.
pub fn parse_node_spec(spec: &str, num_nodes: usize) -> Result<Vec<usize>> {
    let spec = spec.trim();
    if spec == "all" {
        return Ok((0..num_nodes).collect());
    }
    let bad = |item: &str| Error::invalid(format!("bad node spec item {item:?}"));
    let mut nodes = BTreeSet::new();
    for item in spec.split(',').map(str::trim) {
        let (lo, hi) = match item.split_once('-') {
            Some((a, b)) => (a.trim().parse::<usize>(), b.trim().parse::<usize>()),
            None => (item.parse::<usize>(), item.parse::<usize>()),
        };
        let (lo, hi) = match (lo, hi) {
            (Ok(lo), Ok(hi)) if lo <= hi => (lo, hi),
            _ => return Err(bad(item)),
        };
        if hi >= num_nodes {
            return Err(Error::invalid(format!("node {hi} out of range for {num_nodes} nodes")));
        }
        nodes.extend(lo..=hi);
    }
    Ok(nodes.into_iter().collect())
}

/// One row per (node, layer, relation) with layers numbered from 1 and the
/// self relation first.
pub fn relation_scores_csv(report: &RelationScoreReport, nodes: &[usize]) -> Result<String> {
    let n = report.layers.first().map_or(0, |m| m.nrows());
    if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
        return Err(Error::invalid(format!("node {bad} out of range for {n} nodes")));
    }
    let mut out = String::from(RELATION_SCORES_HEADER);
    out.push('\n');
    for &node in nodes {
        for layer in 0..report.layers.len() {
            let normalized = report.normalized(layer, node);
            for (r, name) in report.relation_names.iter().enumerate() {
                writeln!(
                    out,
                    "{node},{},{name},{},{}",
                    layer + 1,
                    report.alpha(layer, node, r),
                    normalized[r]
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// Eval-mode relation scores of `nodes`, written atomically to `out`.
pub fn export_relation_scores(
    net: &HhrNet<'_>,
    nodes: &[usize],
    out: impl AsRef<Path>,
) -> Result<()> {
    let (_, report) = net.explain()?;
    write_atomic(out, relation_scores_csv(&report, nodes)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::DenseMatrix;
    use crate::graphstore::{generate_homogeneous, GenParamsHomogeneous};

    fn small_config() -> RunConfig {
        RunConfig::from_json(
            r#"{"relations": [{"name": "self", "kind": {"power": {"hops": 0}}},
                              {"name": "hop1", "kind": {"power": {"hops": 1}}}],
                "layer_dims": [8], "optim": {"max_epochs": 15}, "train_per_class": 5, "val_count": 15}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = small_config();
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.optim.lr, 0.008);
        assert_eq!(c.optim.max_epochs, 15);
        let with_typo = r#"{"relations": [], "layer_dims": [8], "learning_rate": 0.1}"#;
        assert!(RunConfig::from_json(with_typo).is_err());
        let nested_typo = r#"{"relations": [{"name": "self", "kind": {"power": {"hops": 0}}},
            {"name": "h", "kind": {"power": {"hops": 1}}}], "layer_dims": [8], "optim": {"learning_rate": 0.1}}"#;
        assert!(RunConfig::from_json(nested_typo).is_err());
        let no_self = r#"{"relations": [{"name": "h", "kind": {"power": {"hops": 1}}}], "layer_dims": [8]}"#;
        assert!(RunConfig::from_json(no_self).is_err());
    }

    #[test]
    fn node_spec() {
        assert_eq!(parse_node_spec("0-3,2,7", 10).unwrap(), vec![0, 1, 2, 3, 7]);
        assert_eq!(parse_node_spec("all", 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_node_spec(" 4 ", 5).unwrap(), vec![4]);
        for bad in ["", "3-1", "a", "1-", "5", "0,,1"] {
            assert!(parse_node_spec(bad, 5).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_slices_give_half_scores() {
        let report = RelationScoreReport {
            relation_names: vec!["self".into(), "a".into(), "b".into()],
            layers: vec![DenseMatrix::from_elem((4, 2), 0.5); 2],
        };
        let csv = relation_scores_csv(&report, &[1, 3]).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert_eq!(rows[0], "1,1,self,1,0.5");
        assert_eq!(rows[1], "1,1,a,0.5,0.25");
        assert!(relation_scores_csv(&report, &[4]).is_err());
    }

    #[test]
    fn train_to_dir_is_reproducible_and_consistent() {
        let graph = generate_homogeneous(&GenParamsHomogeneous {
            nodes_per_class: 15,
            ..Default::default()
        })
        .unwrap();
        let config = small_config();
        let splits = resolve_splits(&graph, None, &config).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let runs = train_to_dir(&graph, &splits, &config, a.path()).unwrap();
        train_to_dir(&graph, &splits, &config, b.path()).unwrap();
        for file in [METRICS_FILE, RELATION_SCORES_FILE, CHECKPOINT_FILE, SPLITS_FILE] {
            assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
        }
        let history = fs::read_to_string(a.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(history.lines().next(), Some(HISTORY_HEADER));
        assert_eq!(history.lines().count(), runs[0].history.len() + 1);

        let checkpoint = load_checkpoint(a.path().join(CHECKPOINT_FILE)).unwrap();
        let again = evaluate_checkpoint(&graph, &checkpoint, &splits.test).unwrap();
        assert_eq!(again, runs[0].metrics.test);
    }

    #[test]
    fn multi_seed_layout() {
        let graph = generate_homogeneous(&GenParamsHomogeneous {
            nodes_per_class: 15,
            ..Default::default()
        })
        .unwrap();
        let config = RunConfig {
            seeds: vec![3, 4],
            ..small_config()
        };
        let splits = resolve_splits(&graph, None, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        train_to_dir(&graph, &splits, &config, dir.path()).unwrap();
        let aggregate: AggregateMetrics =
            serde_json::from_str(&fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
        assert_eq!(aggregate.runs.len(), 2);
        for s in [3, 4] {
            assert!(dir.path().join(format!("seed-{s}")).join(CHECKPOINT_FILE).is_file());
        }
    }
}
