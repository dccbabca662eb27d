use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hhrgnn::graphstore::{
    generate_heterogeneous, generate_homogeneous, load_graph, load_splits, save_graph, GenParamsHeterogeneous,
    GenParamsHomogeneous,
};
use hhrgnn::hhrmodel::HhrNet;
use hhrgnn::run::{
    compile_for_checkpoint, evaluate_checkpoint, export_relation_scores, load_checkpoint, parse_node_spec,
    resolve_splits, train_to_dir, RunConfig, SPLITS_FILE,
};
use hhrgnn::trainer::{grad_check_model, gradcheck_setup};
use hhrgnn::{Error, Result};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Hop-hop relation-aware graph neural networks for node classification.
#[derive(Parser, Debug)]
#[command(name = "hhrgnn", version)]
struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic graph in graphstore format.
    Gen(GenArgs),
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print metrics of a checkpoint on one split as JSON.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
        /// Defaults to DATA/splits.json, then splits.json beside the model.
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Export relation scores of selected nodes as CSV.
    Explain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Node ids such as `0-19,25`, or `all`.
        #[arg(long)]
        nodes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare tape gradients with central differences on a random graph.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        nodes: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphKind {
    Planted,
    Apc,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GraphKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    signal: Option<f64>,
    /// planted only
    #[arg(long)]
    nodes_per_class: Option<usize>,
    /// planted only
    #[arg(long)]
    p_in: Option<f64>,
    /// planted only
    #[arg(long)]
    p_out: Option<f64>,
    /// apc only
    #[arg(long)]
    authors_per_class: Option<usize>,
    /// apc only
    #[arg(long)]
    papers: Option<usize>,
    /// apc only
    #[arg(long)]
    venues: Option<usize>,
    /// apc only
    #[arg(long)]
    p_ap_in: Option<f64>,
    /// apc only
    #[arg(long)]
    p_ap_out: Option<f64>,
    /// apc only
    #[arg(long)]
    venue_purity: Option<f64>,
    /// apc only
    #[arg(long)]
    author_signal: Option<f64>,
}

fn gen(args: &GenArgs) -> Result<()> {
    let graph = match args.kind {
        GraphKind::Planted => {
            let d = GenParamsHomogeneous::default();
            generate_homogeneous(&GenParamsHomogeneous {
                nodes_per_class: args.nodes_per_class.unwrap_or(d.nodes_per_class),
                num_classes: args.classes.unwrap_or(d.num_classes),
                p_in: args.p_in.unwrap_or(d.p_in),
                p_out: args.p_out.unwrap_or(d.p_out),
                feature_dim: args.feature_dim.unwrap_or(d.feature_dim),
                signal: args.signal.unwrap_or(d.signal),
                seed: args.seed,
            })?
        }
        GraphKind::Apc => {
            let d = GenParamsHeterogeneous::default();
            generate_heterogeneous(&GenParamsHeterogeneous {
                authors_per_class: args.authors_per_class.unwrap_or(d.authors_per_class),
                num_classes: args.classes.unwrap_or(d.num_classes),
                papers: args.papers.unwrap_or(d.papers),
                venues: args.venues.unwrap_or(d.venues),
                p_ap_in: args.p_ap_in.unwrap_or(d.p_ap_in),
                p_ap_out: args.p_ap_out.unwrap_or(d.p_ap_out),
                venue_purity: args.venue_purity.unwrap_or(d.venue_purity),
                feature_dim: args.feature_dim.unwrap_or(d.feature_dim),
                signal: args.signal.unwrap_or(d.signal),
                author_signal: args.author_signal.unwrap_or(d.author_signal),
                seed: args.seed,
            })?
        }
    };
    save_graph(&graph, &args.out)
}

fn train(data: Option<PathBuf>, config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let data = data
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| Error::invalid("no data directory: pass --data or set data_dir in the config"))?;
    let out = out
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::invalid("no output directory: pass --out or set out_dir in the config"))?;
    let graph = load_graph(&data)?;
    let splits = resolve_splits(&graph, Some(&data), &config)?;
    let runs = train_to_dir(&graph, &splits, &config, &out)?;
    for run in &runs {
        emit(&format!(
            "seed {}: test accuracy {:.4}, macro-F1 {:.4} ({})",
            run.metrics.seed,
            run.metrics.test.accuracy,
            run.metrics.test.macro_f1,
            run.dir.display()
        ));
    }
    Ok(())
}

fn find_splits(data: &Path, model: &Path, explicit: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    let beside_model = model.parent().unwrap_or(Path::new(".")).join(SPLITS_FILE);
    [data.join(SPLITS_FILE), beside_model]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::invalid("no splits found: pass --splits"))
}

fn eval(data: &Path, model: &Path, split: &str, splits: Option<PathBuf>) -> Result<()> {
    let graph = load_graph(data)?;
    let checkpoint = load_checkpoint(model)?;
    let splits = load_splits(find_splits(data, model, splits)?)?;
    splits.validate(&graph)?;
    let mask = splits.get(split).ok_or_else(|| Error::invalid(format!("unknown split {split:?}")))?;
    let metrics = evaluate_checkpoint(&graph, &checkpoint, mask)?;
    emit(&serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
    Ok(())
}

fn explain(data: &Path, model: &Path, nodes: &str, out: &Path) -> Result<()> {
    let graph = load_graph(data)?;
    let checkpoint = load_checkpoint(model)?;
    let nodes = parse_node_spec(nodes, graph.num_nodes)?;
    let relations = compile_for_checkpoint(&graph, &checkpoint)?;
    let net = HhrNet::new(checkpoint.config, checkpoint.params, &relations, &graph.features)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    export_relation_scores(&net, &nodes, out)
}

fn gradcheck(seed: u64, nodes: usize) -> Result<ExitCode> {
    let (graph, config) = gradcheck_setup(nodes, seed)?;
    let err = grad_check_model(&config, &graph)?;
    emit(&format!("{err:e}"));
    Ok(if err < GRADCHECK_TOLERANCE { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(args: impl IntoIterator<Item = String>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::Gen(args) => gen(&args).map(|_| ExitCode::SUCCESS),
        Command::Train { data, config, out } => train(data, &config, out).map(|_| ExitCode::SUCCESS),
        Command::Eval {
            data,
            model,
            split,
            splits,
        } => eval(&data, &model, &split, splits).map(|_| ExitCode::SUCCESS),
        Command::Explain { data, model, nodes, out } => {
            explain(&data, &model, &nodes, &out).map(|_| ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed, nodes } => gradcheck(seed, nodes),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args())
}
