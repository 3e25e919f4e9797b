//! `bintse`: batch front-end for HRTF ingestion, dataset generation,
//! extraction and evaluation.

mod audio;
mod dataset;
mod eval;
mod exit;
mod extract;
mod hrtf;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::exit::CliError;

#[derive(Debug, Parser)]
#[command(name = "bintse", version, about = "Binaural target speaker extraction toolkit")]
struct Cli {
    /// Worker threads for scene-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// error, warn, info, debug or trace. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect, validate or synthesize HRTF sets.
    #[command(subcommand)]
    Hrtf(hrtf::HrtfCommand),
    /// Sample a dataset protocol and render mixtures and targets.
    Dataset(dataset::DatasetArgs),
    /// Run an extraction method over a manifest.
    Extract(extract::ExtractArgs),
    /// Score estimates against targets and aggregate.
    Eval(eval::EvalArgs),
}

/// Options shared by commands that need HRTF sets.
#[derive(Debug, Clone, Args, Serialize)]
pub struct HrtfDirArg {
    /// Folder holding `<subject>.hrtfset.json` files. The subject
    /// `spherical-head` falls back to the built-in model when absent.
    #[arg(long, env = "BINTSE_HRTF_DIR")]
    pub hrtf_dir: Option<PathBuf>,
}

fn init_logging(level: Option<&str>) {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp(None).init();
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Hrtf(cmd) => hrtf::run(cmd),
        Command::Dataset(args) => dataset::run(args),
        Command::Extract(args) => extract::run(args),
        Command::Eval(args) => eval::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_level.as_deref());
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
