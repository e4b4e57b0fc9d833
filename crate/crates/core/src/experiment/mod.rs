//! End-to-end experiment pipeline: configuration, run directory layout,
//! resumable stages and the final report.

mod artifacts;
mod config;
mod manifest;
mod models;
mod report;
mod stages;

use std::path::PathBuf;

use thiserror::Error;

pub use artifacts::{
    load_calibration, load_checkpoint, load_dataset, load_tail_models, CheckpointMeta,
    DatasetIndex,
};
pub use config::{hash_bytes, ClassWeighting, ExperimentConfig, ModelPreset, PoolSizes};
pub use manifest::{ManifestEntry, RunLock, RunManifest, CONFIG_FILE, LOCK_FILE, MANIFEST_FILE};
pub use models::{
    activation_records, build_samples, clip_inputs, clip_logits, closed_set_output,
    combo_vocabulary, msp_unknown, openmax_unknown, KnownIndex, ModelKind,
};
pub use report::{build_report, closed_set_table, detection_table, Metric, Report, ReportRow};
pub use stages::{
    run_all, run_stage, variant_dir, EvaluationRecord, OpenMaxResult, RunOptions, RunSummary,
    Runner, Stage, TuneSummary, MAX_TAU, MIN_TAU,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream output from stage '{stage}': {detail}")]
    MissingUpstream { stage: String, detail: String },
    #[error("run directory is locked by another process ({0}); remove it if that run is gone")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: corrupt artifact: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error(transparent)]
    Bin(#[from] crate::binfmt::BinError),
    #[error(transparent)]
    Plan(#[from] crate::dataset_plan::PlanError),
    #[error(transparent)]
    Synth(#[from] crate::synth_features::SynthError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    OpenSet(#[from] crate::openset::OpenSetError),
    #[error(transparent)]
    Tune(#[from] crate::tuner::TuneError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration errors, 3 when an upstream
    /// stage has not been run, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::MissingUpstream { .. } => 3,
            _ => 1,
        }
    }
}
