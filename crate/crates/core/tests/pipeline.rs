use std::path::Path;

use mlos_core::experiment::{
    run_all, run_stage, ExperimentConfig, ExperimentError, ModelKind, RunOptions, Stage,
    MANIFEST_FILE,
};

fn small_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig::default()
        .with_overrides([
            "n_classes=15",
            "sizes.train=150",
            "sizes.val=40",
            "sizes.test=120",
            "sizes.tuning=30",
            "synth.dim=16",
            "train.max_epochs=30",
            "train.learning_rate=0.01",
            "train.batch_size=32",
            "tuner_budget=10",
            "hidden_layers=[16]",
        ])
        .unwrap()
        .with_overrides([format!("output_dir={}", dir.display()).as_str()])
        .unwrap()
}

#[test]
fn full_run_is_resumable_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let cfg = small_config(&root);
    let first = run_all(&cfg, RunOptions::default()).unwrap();
    // openness + 5 x (plan, synth) + 5 x 5 x (train, tune, evaluate)
    // + 5 x 3 calibrations + report
    assert_eq!(first.updated.len(), 1 + 10 + 75 + 15 + 1);
    for f in ["config.json", MANIFEST_FILE, "report/table2.txt", "report/table3.txt", "report/report.json"] {
        assert!(root.join(f).exists(), "{f}");
    }
    assert!(!root.join("run.lock").exists());
    let stored = std::fs::read_to_string(root.join("config.json")).unwrap();
    assert_eq!(stored, cfg.canonical_json());
    assert_eq!(first.manifest.config_hash, cfg.hash());

    let manifest_bytes = std::fs::read(root.join(MANIFEST_FILE)).unwrap();
    let table = std::fs::read(root.join("report/table2.txt")).unwrap();
    let second = run_all(&cfg, RunOptions::default()).unwrap();
    assert!(second.updated.is_empty(), "{:?}", second.updated);
    assert_eq!(std::fs::read(root.join(MANIFEST_FILE)).unwrap(), manifest_bytes);

    // Forcing one model's training invalidates only its downstream work.
    let forced = run_stage(
        Stage::Train,
        &cfg,
        RunOptions {
            force: true,
            variant: Some(2),
            model: Some(ModelKind::OraclePit),
        },
    )
    .unwrap();
    assert_eq!(forced.updated, vec!["train/variant-2/oracle-pit".to_string()]);
    let resumed = run_all(&cfg, RunOptions::default()).unwrap();
    assert_eq!(
        resumed.updated,
        vec![
            "calibrate/variant-2/oracle-pit",
            "tune/variant-2/oracle-pit",
            "evaluate/variant-2/oracle-pit",
            "report"
        ]
    );
    // training is deterministic, so the report is unchanged
    assert_eq!(std::fs::read(root.join("report/table2.txt")).unwrap(), table);

    // A config change makes everything stale.
    let changed = cfg.clone().with_overrides(["synth.mix_noise=0.05"]).unwrap();
    let plan = run_stage(Stage::Plan, &changed, RunOptions::default()).unwrap();
    assert_eq!(plan.updated.len(), 6);
    let err = run_stage(Stage::Train, &changed, RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    for stage in [Stage::Synth, Stage::Train, Stage::Calibrate, Stage::Tune, Stage::Evaluate, Stage::Report] {
        let err = run_stage(stage, &cfg, RunOptions::default()).unwrap_err();
        assert!(matches!(err, ExperimentError::MissingUpstream { .. }), "{stage:?}: {err}");
        assert_eq!(err.exit_code(), 3);
    }
}

#[test]
fn single_variant_and_model_selection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    let opts = RunOptions {
        force: false,
        variant: Some(3),
        model: Some(ModelKind::MultiLabel),
    };
    let summary = run_all(&cfg, opts).unwrap();
    let keys: Vec<&str> = summary.updated.iter().map(String::as_str).collect();
    assert_eq!(
        keys,
        vec![
            "openness",
            "plan/variant-3",
            "synth/variant-3",
            "train/variant-3/multi-label",
            "calibrate/variant-3/multi-label",
            "tune/variant-3/multi-label",
            "evaluate/variant-3/multi-label",
            "report"
        ]
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.output_dir.join("report/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["variants"], serde_json::json!([3]));
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    let bad = cfg.clone().with_overrides(["n_subsets=2"]).unwrap();
    assert_eq!(run_all(&bad, RunOptions::default()).unwrap_err().exit_code(), 2);
    let opts = RunOptions {
        variant: Some(9),
        ..RunOptions::default()
    };
    assert_eq!(run_all(&cfg, opts).unwrap_err().exit_code(), 2);
}

#[test]
fn concurrent_writers_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    std::fs::create_dir_all(&cfg.output_dir).unwrap();
    let lock = mlos_core::experiment::RunLock::acquire(&cfg.output_dir).unwrap();
    let err = run_stage(Stage::Plan, &cfg, RunOptions::default()).unwrap_err();
    assert!(matches!(err, ExperimentError::Locked(_)));
    assert_eq!(err.exit_code(), 1);
    drop(lock);
    run_stage(Stage::Plan, &cfg, RunOptions::default()).unwrap();
}
