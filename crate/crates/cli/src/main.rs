use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlos_core::experiment::{
    run_all, run_stage, ExperimentConfig, ExperimentError, ModelKind, RunOptions, RunSummary,
    Stage,
};

#[derive(Parser)]
#[command(name = "mlos", version, about = "Multi-label open-set benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; variant k uses seed + k - 1.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only this variant (1-based).
    #[arg(long, global = true)]
    variant: Option<usize>,

    /// Only this model (multi-label, estimates-pit, oracle-pit,
    /// combinatorial, oracle-multiclass).
    #[arg(long, global = true)]
    model: Option<ModelKind>,

    /// Recompute outputs that are already up to date.
    #[arg(long, global = true)]
    force: bool,

    /// Override a config value, e.g. `--set synth.leakage=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Class splits, soundscapes and clip lists.
    Plan,
    /// Feature vectors for every pool.
    Synth,
    /// Classifier checkpoints.
    Train,
    /// Per-class activation statistics for OpenMax.
    Calibrate,
    /// Threshold and OpenMax hyperparameter search.
    Tune,
    /// Test-set metrics.
    Evaluate,
    /// Aggregated tables.
    Report,
    /// Every stage in order.
    RunAll,
    /// Print the effective config and exit.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(cli.overrides.iter().map(String::as_str))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Option<RunSummary>, ExperimentError> {
    let cfg = load_config(cli)?;
    let opts = RunOptions {
        force: cli.force,
        variant: cli.variant,
        model: cli.model,
    };
    let stage = match cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.canonical_json());
            return Ok(None);
        }
        Command::RunAll => return run_all(&cfg, opts).map(Some),
        Command::Plan => Stage::Plan,
        Command::Synth => Stage::Synth,
        Command::Train => Stage::Train,
        Command::Calibrate => Stage::Calibrate,
        Command::Tune => Stage::Tune,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
    };
    run_stage(stage, &cfg, opts).map(Some)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Some(summary)) => {
            if summary.updated.is_empty() {
                log::info!("nothing to do; all outputs are up to date");
            } else {
                log::info!("updated {} manifest entries", summary.updated.len());
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
