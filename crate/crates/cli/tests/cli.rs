use std::path::Path;
use std::process::{Command, Output};

fn mlos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlos"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn small_config(path: &Path, out: &Path) {
    let cfg = serde_json::json!({
        "n_classes": 15,
        "sizes": {"train": 150, "val": 40, "test": 120, "tuning": 30},
        "synth": {"dim": 16},
        "train": {"max_epochs": 30, "learning_rate": 0.01, "batch_size": 32},
        "hidden_layers": [16],
        "tuner_budget": 10,
        "output_dir": out,
    });
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[test]
fn show_config_applies_overrides() {
    let out = mlos(&["show-config", "--seed", "9", "--set", "synth.leakage=0.5"]);
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["synth"]["leakage"], 0.5);
    assert_eq!(cfg["n_classes"], 89);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    for args in [
        vec!["plan", "--set", "no_such_key=1"],
        vec!["plan", "--config", missing.to_str().unwrap()],
        vec!["plan", "--model", "bogus"],
        vec!["plan", "--set", "n_subsets=1"],
    ] {
        let out = mlos(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n_classes\": \"many\"}").unwrap();
    assert_eq!(mlos(&["plan", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_upstream_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    small_config(&cfg, &dir.path().join("run"));
    let out = mlos(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth"));
}

#[test]
fn run_all_then_rerun_does_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let run = dir.path().join("run");
    small_config(&cfg, &run);
    let c = cfg.to_str().unwrap();
    let first = mlos(&["run-all", "--config", c]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let table = std::fs::read_to_string(run.join("report/table2.txt")).unwrap();
    assert!(table.contains("Oracle sources (PIT)"));
    let manifest = std::fs::read(run.join("manifest.json")).unwrap();

    let again = mlos(&["run-all", "--config", c]);
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("nothing to do"));
    assert_eq!(std::fs::read(run.join("manifest.json")).unwrap(), manifest);

    let forced = mlos(&["evaluate", "--config", c, "--force", "--variant", "1", "--model", "oracle-pit"]);
    assert!(forced.status.success());
    assert!(String::from_utf8_lossy(&forced.stderr).contains("updated 1 manifest entries"));
}
