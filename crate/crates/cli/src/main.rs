//! `fusemod`: annotate KITTI drives, generate synthetic data, train, run
//! and evaluate fusion models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fusemod_core::annotation::AnnotationError;
use fusemod_core::eval::EvalError;
use fusemod_core::ingest::IngestError;
use fusemod_core::models::ModelError;
use fusemod_core::synth::SynthError;

use config::{ConfigError, RunConfig, SEED_ENV};

#[derive(Parser, Debug)]
#[command(name = "fusemod", version, about = "Moving-object detection with camera and LiDAR fusion")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice (overrides FUSEMOD_SEED and the file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label tracked objects Moving/Static and write masks plus a manifest.
    #[command(after_help = config::keys(&["", "paths", "annotation"]))]
    Annotate(commands::annotate::AnnotateArgs),

    /// Generate a synthetic scene dataset or a KITTI-layout drive.
    #[command(after_help = config::keys(&["", "paths", "annotation", "synth"]))]
    Synth(commands::synth::SynthArgs),

    /// Train a fusion model on the train split of a manifest.
    #[command(after_help = config::keys(&["", "paths", "model"]))]
    Train(commands::train::TrainArgs),

    /// Write predicted masks for a manifest split.
    #[command(after_help = config::keys(&["", "paths", "model", "eval"]))]
    Infer(commands::infer::InferArgs),

    /// Print mIoU and Moving IoU for predictions or a checkpoint.
    #[command(after_help = config::keys(&["", "paths", "model", "eval"]))]
    Eval(commands::eval::EvalArgs),

    /// Time forward passes of several fusion plans.
    #[command(after_help = config::keys(&["", "model", "eval"]))]
    Bench(commands::bench::BenchArgs),
}

/// Exit status by error class: 2 configuration, 3 data, 4 runtime.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return match e {
                ModelError::InvalidPlan(_) | ModelError::InvalidSpec(_) => 2,
                ModelError::InputMismatch(_) | ModelError::MissingSignal(_) => 3,
                ModelError::Checkpoint(_) | ModelError::Tensor(_) => 4,
                _ => continue,
            };
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return match e {
                SynthError::InvalidSpec(_) | SynthError::ObjectOutOfBounds { .. } => 2,
                _ => continue,
            };
        }
        if let Some(EvalError::UndefinedIoU(_) | EvalError::NonPositiveBase(_)) = cause.downcast_ref::<EvalError>() {
            return 4;
        }
        if cause.is::<IngestError>()
            || cause.is::<AnnotationError>()
            || cause.is::<EvalError>()
            || cause.is::<fusemod_core::geometry::GeometryError>()
            || cause.is::<std::io::Error>()
        {
            return 3;
        }
    }
    4
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref(), std::env::var(SEED_ENV).ok())?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.global.workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| config::config_err(format!("cannot start {} workers: {e}", cfg.workers)))?;
    }
    match cli.command {
        Command::Annotate(a) => commands::annotate::run(cfg, a),
        Command::Synth(a) => commands::synth::run(cfg, a),
        Command::Train(a) => commands::train::run(cfg, a),
        Command::Infer(a) => commands::infer::run(cfg, a),
        Command::Eval(a) => commands::eval::run(cfg, a),
        Command::Bench(a) => commands::bench::run(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
