//! `nssinet` — synthetic cohorts, adversarial training, cross-subject
//! cross-validation, sweeps, channel maps and report bundles.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use nssinet::config::RunConfig;
use nssinet::runner::{self, RunContext, RunSummary};
use nssinet::Error;

#[derive(Parser)]
#[command(name = "nssinet", version, about = "Semi-supervised multi-concept adversarial EEG classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent folds / sweep points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for this run (must not already contain files).
    /// Defaults to `<root>/<command>-<timestamp>` where `<root>` is
    /// `$NSSINET_OUT_ROOT` or `./runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Deterministic mode: single-seeded, bit-reproducible runs. All
    /// computation is deterministic given the seed either way; the flag is
    /// recorded in the run manifest for provenance.
    #[arg(long, default_value_t = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory with planted ground truth.
    Synth(CommonArgs),
    /// Train once (fold 0 held out) and write a checkpoint plus loss CSV.
    Train(CommonArgs),
    /// Semi-supervised cross-subject k-fold cross-validation.
    Cv(CommonArgs),
    /// Discriminator ablation grid under shared folds.
    Ablate(CommonArgs),
    /// Labeled-source ratio sweep.
    SweepRatio(CommonArgs),
    /// Loss-weight ratio sweep.
    SweepWeights(CommonArgs),
    /// Repeated balanced sampling with full cross-validation per round.
    Sampling(CommonArgs),
    /// Per-channel importance map with CSV and SVG topography.
    Channels(CommonArgs),
    /// Consolidate a finished run directory into a summary bundle.
    Report {
        /// The run directory to consolidate.
        run_dir: PathBuf,
        /// Output directory for the bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_root() -> PathBuf {
    std::env::var_os("NSSINET_OUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_out_dir(command: &str) -> PathBuf {
    let stamp =
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    out_root().join(format!("{command}-{stamp}"))
}

fn build_context(command: &str, args: &CommonArgs) -> Result<RunContext, Error> {
    let mut config = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    Ok(RunContext {
        config,
        config_path: args.config.display().to_string(),
        jobs: args.jobs,
        deterministic: args.deterministic,
        out_dir: args.out.clone().unwrap_or_else(|| default_out_dir(command)),
    })
}

fn dispatch(cli: Cli) -> Result<RunSummary, Error> {
    match &cli.command {
        Command::Synth(a) => runner::run_synth(&build_context("synth", a)?),
        Command::Train(a) => runner::run_train(&build_context("train", a)?),
        Command::Cv(a) => runner::run_cv_command(&build_context("cv", a)?),
        Command::Ablate(a) => runner::run_ablate(&build_context("ablate", a)?),
        Command::SweepRatio(a) => runner::run_sweep_ratio(&build_context("sweep-ratio", a)?),
        Command::SweepWeights(a) => runner::run_sweep_weights(&build_context("sweep-weights", a)?),
        Command::Sampling(a) => runner::run_sampling(&build_context("sampling", a)?),
        Command::Channels(a) => runner::run_channels(&build_context("channels", a)?),
        Command::Report { run_dir, out } => {
            let out = out.clone().unwrap_or_else(|| default_out_dir("report"));
            runner::run_report(run_dir, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(summary) => {
            println!("run complete: {}", summary.out_dir.display());
            for a in &summary.artifacts {
                println!("  artifact: {a}");
            }
            if let Ok(text) = serde_json::to_string_pretty(&summary.metrics) {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
