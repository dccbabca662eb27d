use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hhrgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhrgnn")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const PLANTED_CONFIG: &str = r#"{
  "relations": [
    {"name": "self", "kind": {"power": {"hops": 0}}},
    {"name": "hop1", "kind": {"power": {"hops": 1}}},
    {"name": "hop2", "kind": {"power": {"hops": 2}}}
  ],
  "layer_dims": [16],
  "dropout": 0.5,
  "optim": {"max_epochs": 100}
}"#;

const APC_CONFIG: &str = r#"{
  "relations": [
    {"name": "self", "kind": {"power": {"hops": 0}}},
    {"name": "AP", "kind": {"meta_path_sum": {"paths": [[0]]}}},
    {"name": "APC", "kind": {"meta_path_sum": {"paths": [[0, 2]]}}},
    {"name": "APA", "kind": {"meta_path_sum": {"paths": [[0, 1]]}}}
  ],
  "layer_dims": [16, 8],
  "optim": {"lr": 0.006, "max_epochs": 60},
  "train_per_class": 10,
  "val_count": 30
}"#;

#[test]
fn train_then_eval_reports_the_same_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    let config = dir.path().join("config.json");
    fs::write(&config, PLANTED_CONFIG).unwrap();

    assert!(hhrgnn(&["gen", "--kind", "planted", "--out", path(&data), "--seed", "3"]).status.success());
    let trained = hhrgnn(&["train", "--data", path(&data), "--config", path(&config), "--out", path(&out)]);
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    for f in ["checkpoint.json", "history.csv", "metrics.json", "relation_scores.csv", "splits.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let model = out.join("checkpoint.json");
    let eval = hhrgnn(&["eval", "--data", path(&data), "--model", path(&model)]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, saved["test"]);

    let again = dir.path().join("again");
    hhrgnn(&["train", "--data", path(&data), "--config", path(&config), "--out", path(&again)]);
    for f in ["metrics.json", "relation_scores.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn explain_first_twenty_authors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("apc");
    let out = dir.path().join("run");
    let config = dir.path().join("config.json");
    fs::write(&config, APC_CONFIG).unwrap();
    assert!(hhrgnn(&["gen", "--kind", "apc", "--out", path(&data), "--seed", "1"]).status.success());
    let trained = hhrgnn(&["train", "--data", path(&data), "--config", path(&config), "--out", path(&out)]);
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));

    let csv = dir.path().join("scores").join("first20.csv");
    let model = out.join("checkpoint.json");
    let res = hhrgnn(&["explain", "--data", path(&data), "--model", path(&model), "--nodes", "0-19", "--out", path(&csv)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node_id,layer,relation_name,alpha_raw,alpha_normalized"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let (layers, relations) = (2, 4);
    assert_eq!(rows.len(), 20 * layers * relations);
    for group in rows.chunks(relations) {
        assert_eq!(group[0][2], "self");
        assert_eq!(group[0][3], "1");
        let total: f64 = group.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for r in &group[1..] {
            let a: f64 = r[3].parse().unwrap();
            assert!(a > 0.0 && a < 1.0);
        }
    }
}

#[test]
fn gradcheck_passes() {
    let res = hhrgnn(&["gradcheck", "--seed", "7"]);
    assert!(res.status.success());
    let err: f64 = String::from_utf8_lossy(&res.stdout).trim().parse().unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn unknown_flag_is_a_one_line_user_error() {
    let res = hhrgnn(&["train", "--bogus-flag"]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.contains("--bogus-flag"), "{stderr}");
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(hhrgnn(&["--help"]).status.code(), Some(0));
    assert_eq!(hhrgnn(&["--version"]).status.code(), Some(0));
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = hhrgnn(&["eval", "--data", path(&dir.path().join("nope")), "--model", "m.json"]);
    assert_eq!(missing.status.code(), Some(1));

    let data = dir.path().join("data");
    hhrgnn(&["gen", "--kind", "planted", "--out", path(&data)]);
    let config = dir.path().join("config.json");
    fs::write(&config, PLANTED_CONFIG.replace("\"dropout\"", "\"drop_out\"")).unwrap();
    let res = hhrgnn(&["train", "--data", path(&data), "--config", path(&config), "--out", path(&dir.path().join("o"))]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("drop_out"), "{stderr}");
    assert!(!dir.path().join("o").exists());

    let bad_gen = hhrgnn(&["gen", "--kind", "planted", "--out", path(&data), "--p-in", "1.5"]);
    assert_eq!(bad_gen.status.code(), Some(1));

    let bad_nodes = hhrgnn(&["gradcheck", "--nodes", "1"]);
    assert_eq!(bad_nodes.status.code(), Some(1));
}
