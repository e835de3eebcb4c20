use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_qffn");

fn small_config(extra: Value) -> Value {
    let mut base = json!({
        "model": {"hidden": 16, "num_layers": 1, "num_heads": 2, "intermediate": 32, "max_seq_len": 16},
        "train": {"max_epochs": 1, "batch_size": 8, "learning_rate": 1e-3},
        "data": {"synth": {"train_examples": 40, "val_examples": 20, "num_classes": 2}},
        "ffn_kind": "qffn",
        "pqc_layers": 1,
        "sweep": {"depths": [1, 2, 4, 8], "fractions": [1.0, 0.5, 0.25]},
        "probe": {"variants": ["optimized", "vanilla"], "depths": [1, 2, 4, 8], "num_samples": 40}
    });
    let (Value::Object(b), Value::Object(e)) = (&mut base, extra) else { unreachable!() };
    b.extend(e);
    base
}

fn write_config(dir: &Path, config: &Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({})));
    let out = dir.path().join("run");
    let result = run(&["train"], &config, &out);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    for f in ["metrics.json", "epochs.csv", "weights.bin", "weights.json", "config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics: Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    for key in ["validation_accuracy", "training_accuracy", "gap", "accuracy_per_param", "param_total", "epochs", "config_echo"] {
        assert!(metrics.get(key).is_some(), "{key} missing");
    }
    assert!(metrics["wall_clock_s"].is_null());
    assert_eq!(metrics["epochs"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert!(csv.starts_with("epoch,train_loss,val_loss,train_acc,val_acc\n"));
}

#[test]
fn unsupported_depth_is_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({"pqc_layers": 3})));
    let out = dir.path().join("run");
    let result = run(&["train"], &config, &out);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("pqc_layers"));
    assert!(!out.exists());

    let relaxed = write_config(dir.path(), &small_config(json!({"pqc_layers": 3, "strict_depths": false})));
    assert!(run(&["train"], &relaxed, &out).status.success());
}

#[test]
fn missing_dataset_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(json!({"data": {"tsv": {"train": "nope.tsv", "val": "nope.tsv", "num_classes": 2}}})),
    );
    let out = dir.path().join("run");
    let result = run(&["train"], &config, &out);
    assert_ne!(result.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&result.stderr).contains("data.tsv.train"));
    assert!(!out.exists());
}

#[test]
fn tsv_dataset_paths_resolve_against_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for i in 0..30 {
        rows.push_str(&format!("{} movie\t{}\n", if i % 2 == 0 { "great" } else { "awful" }, i % 2));
    }
    fs::write(dir.path().join("train.tsv"), &rows).unwrap();
    fs::write(dir.path().join("dev.tsv"), &rows).unwrap();
    let config = write_config(
        dir.path(),
        &small_config(json!({"data": {"tsv": {"train": "train.tsv", "val": "dev.tsv", "num_classes": 2}}})),
    );
    let result = run(&["train"], &config, &dir.path().join("run"));
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
}

#[test]
fn sweep_table_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({})));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["sweep"], &config, &a).status.success());
    assert!(run(&["sweep"], &config, &b).status.success());

    let table = fs::read_to_string(a.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "model,layers,fraction,val_acc,train_acc,gap,acc_per_param");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    assert_eq!(rows.iter().filter(|r| r[0] == "classical" && r[1] == "-").count(), 3);
    assert_eq!(rows.iter().filter(|r| r[0] == "qffn").count(), 12);
    assert_eq!(fs::read(a.join("table.csv")).unwrap(), fs::read(b.join("table.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("failures.csv")).unwrap(), "cell,error\n");
    assert!(a.join("cells/qffn_L8_f0.25/metrics.json").is_file());
}

#[test]
fn ablate_uses_the_vanilla_block() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &small_config(json!({"sweep": {"depths": [1, 2], "fractions": [1.0], "include_baseline": false}})),
    );
    let out = dir.path().join("ablate");
    assert!(run(&["ablate"], &config, &out).status.success());
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let models: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["vanilla_qffn", "vanilla_qffn"]);
}

#[test]
fn probe_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({})));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["probe"], &config, &a).status.success());
    assert!(run(&["probe"], &config, &b).status.success());
    let csv = fs::read_to_string(a.join("probe.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "depth,variant,variance,num_samples,seed");
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(csv, fs::read_to_string(b.join("probe.csv")).unwrap());

    let bad = write_config(dir.path(), &small_config(json!({"probe": {"num_samples": 10}})));
    let result = run(&["probe"], &bad, &dir.path().join("c"));
    assert_ne!(result.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&result.stderr).contains("probe.num_samples"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({})));
    let out = dir.path().join("run");
    let result = Command::new(BIN)
        .args(["train", "--seed", "9", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(result.status.success());
    let metrics: Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["config_echo"]["train"]["seed"], 9);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config(json!({"learning_rate": 0.1})));
    assert_eq!(run(&["train"], &config, &dir.path().join("run")).status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    use qffn_bert::config::{Command as Stage, RunConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, stage) in [
        ("train_synth.json", Stage::Train),
        ("sweep_synth.json", Stage::Sweep),
        ("probe.json", Stage::Probe),
    ] {
        let (config, _) = RunConfig::load(&dir.join(file)).unwrap();
        config.validate(stage).unwrap();
    }
    RunConfig::load(&dir.join("train_tsv.json")).unwrap();
}
