//! Stage runner: every stage reads its upstream artifacts from the run
//! directory, writes its own, and records them in the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{
    load_calibration, load_checkpoint, load_dataset, load_tail_models, save_calibration,
    save_checkpoint, save_dataset, save_tail_models, CheckpointMeta,
};
use super::config::ExperimentConfig;
use super::manifest::{ManifestEntry, RunLock, RunManifest, CONFIG_FILE};
use super::models::{
    activation_records, build_samples, clip_logits, closed_set_output, combo_vocabulary,
    msp_unknown, openmax_unknown, KnownIndex, ModelKind,
};
use super::report::{build_report, write_report};
use super::ExperimentError;
use crate::binfmt::{read_json, read_jsonl, write_json, write_jsonl};
use crate::classifier::{train, MlpParams, TrainConfig};
use crate::dataset_plan::{
    make_split_variants, sample_soundscape_specs, window_clips, ClassSplit, OpennessReport, Pool,
    SoundscapeSpec,
};
use crate::eval::{
    closed_set_report, unknown_detection_accuracy, ClosedSetClip, ClosedSetReport,
    UnknownDetectionReport,
};
use crate::openset::{OpenMaxConfig, TailCalibration};
use crate::seed::{derive_seed, rng_for, stream};
use crate::synth_features::{init_prototypes, render_pool, RenderedClip};
use crate::tuner::{tune, write_trial_log, SearchSpace, TrialRecord};

/// Smallest tail the tuner may pick; calibration needs this many qualifying
/// activations per class.
pub const MIN_TAU: usize = 5;
pub const MAX_TAU: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Plan,
    Synth,
    Train,
    Calibrate,
    Tune,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Plan,
        Stage::Synth,
        Stage::Train,
        Stage::Calibrate,
        Stage::Tune,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Calibrate => "calibrate",
            Stage::Tune => "tune",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Recompute even when outputs are up to date.
    pub force: bool,
    /// Restrict to one variant (1-based).
    pub variant: Option<usize>,
    /// Restrict model stages to one model.
    pub model: Option<ModelKind>,
}

/// Manifest after the run plus the entries that were (re)computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub updated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub model: ModelKind,
    pub variant: usize,
    pub n_clips: usize,
    pub msp: TrialRecord,
    pub openmax: Option<TrialRecord>,
    pub tau_range: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenMaxResult {
    pub delta: f64,
    pub tau: usize,
    pub alpha: usize,
    pub detection: UnknownDetectionReport,
    /// Whether this result belongs in the report tables.
    pub reported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub model: ModelKind,
    pub variant: usize,
    pub seed: u64,
    pub n_clips: usize,
    pub n_unknown_clips: usize,
    /// Accuracy of always answering the more frequent test label.
    pub majority_baseline: f64,
    pub msp_delta: f64,
    pub msp: UnknownDetectionReport,
    pub openmax: Option<OpenMaxResult>,
    pub closed_set: ClosedSetReport,
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned()
}

fn mkdir(p: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(p).map_err(|source| ExperimentError::Io {
        path: p.to_path_buf(),
        source,
    })
}

pub fn variant_dir(root: &Path, variant: usize) -> PathBuf {
    root.join(format!("variant-{variant}"))
}

fn stage_dir(root: &Path, variant: usize, stage: Stage) -> PathBuf {
    variant_dir(root, variant).join(stage.name())
}

fn key(stage: Stage, variant: usize, model: Option<ModelKind>) -> String {
    match model {
        Some(m) => format!("{}/variant-{variant}/{m}", stage.name()),
        None => format!("{}/variant-{variant}", stage.name()),
    }
}

pub struct Runner<'a> {
    config: &'a ExperimentConfig,
    opts: RunOptions,
    root: PathBuf,
    manifest: RunManifest,
    updated: Vec<String>,
    _lock: RunLock,
}

impl<'a> Runner<'a> {
    /// Validates the config, claims the run directory and stores the config.
    pub fn open(config: &'a ExperimentConfig, opts: RunOptions) -> Result<Self, ExperimentError> {
        config.validate()?;
        if let Some(v) = opts.variant {
            if v == 0 || v > config.n_subsets {
                return Err(ExperimentError::Config(format!(
                    "variant {v} outside 1..={}",
                    config.n_subsets
                )));
            }
        }
        let root = config.output_dir.clone();
        mkdir(&root)?;
        let lock = RunLock::acquire(&root)?;
        let text = config.canonical_json();
        let cfg_path = root.join(CONFIG_FILE);
        if std::fs::read_to_string(&cfg_path).ok().as_deref() != Some(text.as_str()) {
            std::fs::write(&cfg_path, &text).map_err(|source| ExperimentError::Io {
                path: cfg_path.clone(),
                source,
            })?;
        }
        let manifest = RunManifest::load_or_new(&root, &config.hash())?;
        Ok(Self {
            config,
            opts,
            root,
            manifest,
            updated: Vec::new(),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn finish(self) -> RunSummary {
        RunSummary {
            manifest: self.manifest.clone(),
            updated: self.updated.clone(),
        }
    }

    fn variants(&self) -> Vec<usize> {
        match self.opts.variant {
            Some(v) => vec![v],
            None => (1..=self.config.n_subsets).collect(),
        }
    }

    fn models(&self, filter: impl Fn(ModelKind) -> bool) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|&m| self.opts.model.is_none_or(|o| o == m))
            .filter(|&m| filter(m))
            .collect()
    }

    fn require(&self, stage: Stage, variant: usize, model: Option<ModelKind>) -> Result<(), ExperimentError> {
        let k = key(stage, variant, model);
        if self.manifest.is_fresh(&self.root, &k) {
            Ok(())
        } else {
            Err(ExperimentError::MissingUpstream {
                stage: stage.name().to_string(),
                detail: format!("'{k}' has no up-to-date output; run `{}` first", stage.name()),
            })
        }
    }

    /// Runs `f` unless `key` is fresh; `f` returns the absolute output paths.
    fn step(
        &mut self,
        key: String,
        f: impl FnOnce(&Self) -> Result<Vec<PathBuf>, ExperimentError>,
    ) -> Result<(), ExperimentError> {
        if !self.opts.force && self.manifest.is_fresh(&self.root, &key) {
            log::info!("{key}: up to date");
            return Ok(());
        }
        log::info!("{key}: running");
        let start = Instant::now();
        let outputs = f(self)?;
        let entry = ManifestEntry {
            config_hash: self.manifest.config_hash.clone(),
            outputs: outputs.iter().map(|p| rel(&self.root, p)).collect(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{key}: done in {:.1}s", entry.seconds);
        self.invalidate_downstream(&key);
        self.manifest.entries.insert(key.clone(), entry);
        self.manifest.save(&self.root)?;
        self.updated.push(key);
        Ok(())
    }

    /// Drops entries that were built from an older version of `key`'s
    /// outputs: later stages of the same variant (and model) and the report.
    fn invalidate_downstream(&mut self, key: &str) {
        let (stage, variant, model) = parse_key(key);
        let Some(stage) = stage else { return };
        let stale: Vec<String> = self
            .manifest
            .entries
            .keys()
            .filter(|k| {
                let (s, v, m) = parse_key(k);
                let Some(s) = s else { return false };
                s == Stage::Report
                    || (s > stage
                        && (variant.is_none() || v == variant)
                        && (model.is_none() || m == model))
            })
            .cloned()
            .collect();
        for k in stale {
            log::debug!("{k}: invalidated by {key}");
            self.manifest.entries.remove(&k);
        }
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), ExperimentError> {
        match stage {
            Stage::Plan => {
                self.step("openness".into(), |r| r.openness_summary())?;
                for v in self.variants() {
                    self.step(key(Stage::Plan, v, None), |r| r.plan(v))?;
                }
            }
            Stage::Synth => {
                for v in self.variants() {
                    self.require(Stage::Plan, v, None)?;
                    self.step(key(Stage::Synth, v, None), |r| r.synth(v))?;
                }
            }
            Stage::Train => {
                for v in self.variants() {
                    self.require(Stage::Synth, v, None)?;
                    for m in self.models(|_| true) {
                        self.step(key(Stage::Train, v, Some(m)), |r| r.train(v, m))?;
                    }
                }
            }
            Stage::Calibrate => {
                for v in self.variants() {
                    for m in self.models(|m| m.openmax_squash().is_some()) {
                        self.require(Stage::Train, v, Some(m))?;
                        self.step(key(Stage::Calibrate, v, Some(m)), |r| r.calibrate(v, m))?;
                    }
                }
            }
            Stage::Tune => {
                for v in self.variants() {
                    for m in self.models(|_| true) {
                        self.require(Stage::Train, v, Some(m))?;
                        if m.openmax_squash().is_some() {
                            self.require(Stage::Calibrate, v, Some(m))?;
                        }
                        self.step(key(Stage::Tune, v, Some(m)), |r| r.tune(v, m))?;
                    }
                }
            }
            Stage::Evaluate => {
                for v in self.variants() {
                    for m in self.models(|_| true) {
                        self.require(Stage::Tune, v, Some(m))?;
                        self.step(key(Stage::Evaluate, v, Some(m)), |r| r.evaluate(v, m))?;
                    }
                }
            }
            Stage::Report => {
                let any = self
                    .manifest
                    .entries
                    .keys()
                    .any(|k| k.starts_with("evaluate/") && self.manifest.is_fresh(&self.root, k));
                if !any {
                    return Err(ExperimentError::MissingUpstream {
                        stage: Stage::Evaluate.name().to_string(),
                        detail: "no evaluation results; run `evaluate` first".into(),
                    });
                }
                self.step("report".into(), |r| r.report())?;
            }
        }
        Ok(())
    }

    fn splits(&self) -> Result<Vec<ClassSplit>, ExperimentError> {
        Ok(make_split_variants(
            &self.config.vocabulary()?,
            self.config.n_subsets,
            self.config.openness,
        )?)
    }

    fn pool_size(&self, pool: Pool) -> usize {
        let s = &self.config.sizes;
        match pool {
            Pool::Train => s.train,
            Pool::Val => s.val,
            Pool::Test => s.test,
            Pool::Tuning => s.tuning(),
        }
    }

    fn openness_summary(&self) -> Result<Vec<PathBuf>, ExperimentError> {
        #[derive(Serialize)]
        struct Row {
            variant: usize,
            #[serde(flatten)]
            report: OpennessReport,
        }
        let rows: Vec<Row> = self
            .splits()?
            .iter()
            .map(|s| Row {
                variant: s.variant_id,
                report: s.openness(),
            })
            .collect();
        let path = self.root.join("openness.json");
        write_json(&path, &rows)?;
        Ok(vec![path])
    }

    fn plan(&self, v: usize) -> Result<Vec<PathBuf>, ExperimentError> {
        let split = self.splits()?.swap_remove(v - 1);
        let dir = stage_dir(&self.root, v, Stage::Plan);
        mkdir(&dir)?;
        let vocab = self.config.vocabulary()?;
        let seed = self.config.variant_seed(v);
        let mut outputs = vec![dir.join("split.json"), dir.join("openness.json")];
        write_json(&outputs[0], &split)?;
        write_json(&outputs[1], &split.openness())?;
        for pool in Pool::ALL {
            let specs = sample_soundscape_specs(
                &split,
                &vocab,
                self.pool_size(pool),
                pool,
                &self.config.soundscape,
                seed,
            )?;
            let clips: Vec<_> = specs.iter().flat_map(window_clips).collect();
            let p = dir.join(format!("{}.jsonl", pool.name()));
            let c = dir.join(format!("{}_clips.jsonl", pool.name()));
            write_jsonl(&p, &specs)?;
            write_jsonl(&c, &clips)?;
            outputs.extend([p, c]);
        }
        Ok(outputs)
    }

    fn synth(&self, v: usize) -> Result<Vec<PathBuf>, ExperimentError> {
        let plan = stage_dir(&self.root, v, Stage::Plan);
        let dir = stage_dir(&self.root, v, Stage::Synth);
        mkdir(&dir)?;
        let seed = self.config.variant_seed(v);
        let syn = &self.config.synth;
        let bank = init_prototypes(
            self.config.n_classes,
            syn.dim,
            syn.min_separation,
            derive_seed(seed, &[stream::PROTOTYPES]),
        )?
        .with_jitter_scale(syn.jitter_scale);
        let mut outputs = Vec::new();
        for pool in Pool::ALL {
            let specs: Vec<SoundscapeSpec> = read_jsonl(&plan.join(format!("{}.jsonl", pool.name())))?;
            let clips = render_pool(&specs, pool, &bank, syn, seed)?;
            let path = dir.join(format!("{}.bin", pool.name()));
            save_dataset(&path, pool, syn.dim, &clips)?;
            outputs.push(path);
        }
        Ok(outputs)
    }

    fn load_split(&self, v: usize) -> Result<ClassSplit, ExperimentError> {
        Ok(read_json(&stage_dir(&self.root, v, Stage::Plan).join("split.json"))?)
    }

    fn load_pool(&self, v: usize, pool: Pool) -> Result<Vec<RenderedClip>, ExperimentError> {
        load_dataset(&stage_dir(&self.root, v, Stage::Synth).join(format!("{}.bin", pool.name())))
    }

    fn checkpoint_path(&self, v: usize, m: ModelKind) -> PathBuf {
        stage_dir(&self.root, v, Stage::Train).join(format!("{m}.bin"))
    }

    fn train(&self, v: usize, m: ModelKind) -> Result<Vec<PathBuf>, ExperimentError> {
        let split = self.load_split(v)?;
        let known = KnownIndex::new(&split);
        let train_clips = self.load_pool(v, Pool::Train)?;
        let val_clips = self.load_pool(v, Pool::Val)?;
        let combos = if m == ModelKind::Combinatorial {
            Some(combo_vocabulary(&train_clips, &known)?)
        } else {
            None
        };
        let (train_set, _) = build_samples(m, &train_clips, &known, combos.as_ref())?;
        let (val_set, val_skipped) = build_samples(m, &val_clips, &known, combos.as_ref())?;
        let outputs = combos.as_ref().map_or(known.len(), |c| c.len());
        let seed = self.config.variant_seed(v);
        let model_tag = ModelKind::ALL.iter().position(|&k| k == m).unwrap_or(0) as u64;
        let initial = MlpParams::init(
            self.config.synth.dim,
            &self.config.hidden(),
            outputs,
            &mut rng_for(seed, &[stream::TRAIN, u64::MAX, model_tag]),
        );
        let cfg = TrainConfig {
            seed: derive_seed(seed, &[stream::TRAIN, model_tag]),
            loss: m.loss(),
            ..self.config.train.clone()
        };
        let report = train(&cfg, initial, &train_set, &val_set)?;
        let dir = stage_dir(&self.root, v, Stage::Train);
        mkdir(&dir)?;
        let path = self.checkpoint_path(v, m);
        let meta = CheckpointMeta {
            model: m,
            loss: m.loss(),
            shapes: report.checkpoint.params.shapes(),
            known_classes: known.classes.clone(),
            combos,
            epoch: report.checkpoint.epoch,
            val_loss: report.checkpoint.val_loss,
            n_train: train_set.len(),
            n_val: val_set.len(),
            val_skipped,
            history: report.history,
        };
        save_checkpoint(&path, &report.checkpoint.params, &meta)?;
        Ok(vec![crate::binfmt::sidecar_path(&path), path])
    }

    fn calibration_path(&self, v: usize, m: ModelKind) -> PathBuf {
        stage_dir(&self.root, v, Stage::Calibrate).join(format!("{m}.bin"))
    }

    fn calibrate(&self, v: usize, m: ModelKind) -> Result<Vec<PathBuf>, ExperimentError> {
        let known = KnownIndex::new(&self.load_split(v)?);
        let (params, _) = load_checkpoint(&self.checkpoint_path(v, m))?;
        let mut records = Vec::new();
        for clip in self.load_pool(v, Pool::Train)? {
            let logits = clip_logits(m, &params, &clip)?;
            records.extend(activation_records(m, &logits, &clip, &known)?);
        }
        let cal = TailCalibration::fit(&records, known.len(), MIN_TAU)?;
        let dir = stage_dir(&self.root, v, Stage::Calibrate);
        mkdir(&dir)?;
        let path = self.calibration_path(v, m);
        save_calibration(&path, m, &cal)?;
        Ok(vec![crate::binfmt::sidecar_path(&path), path])
    }

    /// Logits and unknown-presence truth for every clip of a pool.
    fn pool_outputs(
        &self,
        v: usize,
        m: ModelKind,
        pool: Pool,
    ) -> Result<(Vec<RenderedClip>, Vec<Vec<Vec<f64>>>, Vec<bool>, CheckpointMeta), ExperimentError> {
        let known = KnownIndex::new(&self.load_split(v)?);
        let (params, meta) = load_checkpoint(&self.checkpoint_path(v, m))?;
        let clips = self.load_pool(v, pool)?;
        let logits = clips
            .iter()
            .map(|c| clip_logits(m, &params, c))
            .collect::<Result<Vec<_>, _>>()?;
        let truth = clips.iter().map(|c| known.contains_unknown(&c.labels)).collect();
        Ok((clips, logits, truth, meta))
    }

    fn tune(&self, v: usize, m: ModelKind) -> Result<Vec<PathBuf>, ExperimentError> {
        let (clips, logits, truth, _) = self.pool_outputs(v, m, Pool::Tuning)?;
        let seed = derive_seed(self.config.variant_seed(v), &[stream::TUNE]);
        let budget = self.config.tuner_budget;
        let dir = stage_dir(&self.root, v, Stage::Tune);
        mkdir(&dir)?;
        let mut outputs = Vec::new();

        let msp = tune(
            |p| -> Result<f64, ExperimentError> {
                let d = logits
                    .iter()
                    .map(|l| msp_unknown(m, l, p.delta))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(unknown_detection_accuracy(&d, &truth)?.accuracy)
            },
            &SearchSpace::msp_only(),
            budget,
            seed,
        )?;
        let msp_log = dir.join(format!("{m}_msp.csv"));
        write_csv(&msp_log, &msp.trials)?;
        outputs.push(msp_log);

        let mut openmax = None;
        let mut tau_range = None;
        if m.openmax_squash().is_some() {
            let cal = load_calibration(&self.calibration_path(v, m))?;
            let n = cal.classes.len();
            let space = SearchSpace {
                tau: (MIN_TAU, MAX_TAU.min(cal.max_tau())),
                ..SearchSpace::openmax(n)
            };
            tau_range = Some(space.tau);
            let result = tune(
                |p| -> Result<f64, ExperimentError> {
                    let models = cal.models(p.tau)?;
                    let om = OpenMaxConfig {
                        alpha: p.alpha,
                        delta: p.delta,
                        tau: p.tau,
                    };
                    let d = logits
                        .iter()
                        .map(|l| openmax_unknown(m, l, &models, &om))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(unknown_detection_accuracy(&d, &truth)?.accuracy)
                },
                &space,
                budget,
                derive_seed(seed, &[1]),
            )?;
            let log_path = dir.join(format!("{m}_openmax.csv"));
            write_csv(&log_path, &result.trials)?;
            let bank = dir.join(format!("{m}_openmax.bin"));
            save_tail_models(&bank, &cal.models(result.best.params.tau)?)?;
            let p = result.best.params;
            let om_path = dir.join(format!("{m}_openmax_config.json"));
            write_json(
                &om_path,
                &OpenMaxConfig {
                    alpha: p.alpha,
                    delta: p.delta,
                    tau: p.tau,
                },
            )?;
            outputs.extend([log_path, crate::binfmt::sidecar_path(&bank), bank, om_path]);
            openmax = Some(result.best);
        }

        let summary = TuneSummary {
            model: m,
            variant: v,
            n_clips: clips.len(),
            msp: msp.best,
            openmax,
            tau_range,
        };
        let path = dir.join(format!("{m}.json"));
        write_json(&path, &summary)?;
        outputs.push(path);
        Ok(outputs)
    }

    fn evaluate(&self, v: usize, m: ModelKind) -> Result<Vec<PathBuf>, ExperimentError> {
        let tune_dir = stage_dir(&self.root, v, Stage::Tune);
        let summary: TuneSummary = read_json(&tune_dir.join(format!("{m}.json")))?;
        let (clips, logits, truth, meta) = self.pool_outputs(v, m, Pool::Test)?;
        let known = KnownIndex::new(&self.load_split(v)?);

        let msp_d = logits
            .iter()
            .map(|l| msp_unknown(m, l, summary.msp.params.delta))
            .collect::<Result<Vec<_>, _>>()?;
        let msp = unknown_detection_accuracy(&msp_d, &truth)?;

        let openmax = match &summary.openmax {
            Some(best) => {
                let models = load_tail_models(&tune_dir.join(format!("{m}_openmax.bin")))?;
                let p = best.params;
                let om = OpenMaxConfig {
                    alpha: p.alpha,
                    delta: p.delta,
                    tau: p.tau,
                };
                let d = logits
                    .iter()
                    .map(|l| openmax_unknown(m, l, &models, &om))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(OpenMaxResult {
                    delta: p.delta,
                    tau: p.tau,
                    alpha: p.alpha,
                    detection: unknown_detection_accuracy(&d, &truth)?,
                    reported: m.openmax_reported(),
                })
            }
            None => None,
        };

        let closed: Vec<ClosedSetClip> = clips
            .iter()
            .zip(&logits)
            .map(|(c, l)| {
                let (predicted, scores) =
                    closed_set_output(m, l, c.m, known.len(), meta.combos.as_ref());
                ClosedSetClip {
                    truth: known.local_labels(&c.labels),
                    contains_unknown: known.contains_unknown(&c.labels),
                    predicted,
                    scores,
                }
            })
            .collect();
        let n_unknown = truth.iter().filter(|&&t| t).count();
        let rate = n_unknown as f64 / truth.len() as f64;
        let record = EvaluationRecord {
            model: m,
            variant: v,
            seed: self.config.variant_seed(v),
            n_clips: clips.len(),
            n_unknown_clips: n_unknown,
            majority_baseline: rate.max(1.0 - rate),
            msp_delta: summary.msp.params.delta,
            msp,
            openmax,
            closed_set: closed_set_report(&closed, known.len())?,
        };
        let dir = stage_dir(&self.root, v, Stage::Evaluate);
        mkdir(&dir)?;
        let path = dir.join(format!("{m}.json"));
        write_json(&path, &record)?;
        Ok(vec![path])
    }

    fn report(&self) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut records = Vec::new();
        for v in 1..=self.config.n_subsets {
            for m in ModelKind::ALL {
                if self.manifest.is_fresh(&self.root, &key(Stage::Evaluate, v, Some(m))) {
                    let path = stage_dir(&self.root, v, Stage::Evaluate).join(format!("{m}.json"));
                    records.push(read_json::<EvaluationRecord>(&path)?);
                }
            }
        }
        let openness: Vec<serde_json::Value> = read_json(&self.root.join("openness.json"))
            .unwrap_or_default();
        let report = build_report(&records, openness)?;
        write_report(&self.root.join("report"), &report)
    }
}

fn parse_key(key: &str) -> (Option<Stage>, Option<usize>, Option<ModelKind>) {
    let mut parts = key.split('/');
    let stage = parts
        .next()
        .and_then(|n| Stage::ALL.into_iter().find(|s| s.name() == n));
    let variant = parts
        .next()
        .and_then(|p| p.strip_prefix("variant-"))
        .and_then(|n| n.parse().ok());
    let model = parts.next().and_then(|m| m.parse().ok());
    (stage, variant, model)
}

fn write_csv(path: &Path, trials: &[TrialRecord]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    write_trial_log(&mut buf, trials).map_err(io)?;
    std::fs::write(path, buf).map_err(io)
}

/// Runs one stage (for the selected variants and models).
pub fn run_stage(
    stage: Stage,
    config: &ExperimentConfig,
    opts: RunOptions,
) -> Result<RunSummary, ExperimentError> {
    let mut runner = Runner::open(config, opts)?;
    runner.run(stage)?;
    Ok(runner.finish())
}

/// Runs every stage in order.
pub fn run_all(config: &ExperimentConfig, opts: RunOptions) -> Result<RunSummary, ExperimentError> {
    let mut runner = Runner::open(config, opts)?;
    for stage in Stage::ALL {
        runner.run(stage)?;
    }
    Ok(runner.finish())
}
