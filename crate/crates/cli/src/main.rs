//! `bitcover`: classify video from per-frame compressed sizes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use log::LevelFilter;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "bitcover", about = "Video classification from H.264 frame sizes, without decoding")]
struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-frame sizes from Annex B files.
    Extract(commands::extract::Args),
    /// Synthetic labelled clips plus a manifest.
    Synth(commands::synth::Args),
    /// Window a manifest into train/test tensors.
    Dataset(commands::dataset::Args),
    /// Class-pair KL divergence of frame-size histograms.
    Stats(commands::stats::Args),
    /// Train the residual classifier.
    Train(commands::train::Args),
    /// Evaluate a checkpoint on a tensor.
    Eval(commands::eval::Args),
    /// k-NN DTW baseline.
    Dtw(commands::dtw::Args),
    /// Inference throughput, optionally against DTW.
    Bench(commands::bench::Args),
}

/// How a run ended. Maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration (exit 1).
    Usage(anyhow::Error),
    /// Nothing could be produced (exit 2).
    Total(anyhow::Error),
    /// A result broke an internal consistency check (exit 3).
    Invariant(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Total(e)
    }
}

fn version() -> String {
    format!(
        "{} (series jsonl v{}, tensor v{}, checkpoint v{})",
        env!("CARGO_PKG_VERSION"),
        bitcover_core::bitstream::io::SERIES_FORMAT_VERSION,
        bitcover_core::series::TENSOR_FORMAT_VERSION,
        bitcover_core::model::CHECKPOINT_FORMAT_VERSION,
    )
}

fn parse() -> Result<Cli, clap::Error> {
    let matches = Cli::command().version(version()).try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn resolve_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(Failure::Usage)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    match &cli.command {
        Command::Extract(_) => {}
        Command::Synth(a) => a.apply(&mut cfg),
        Command::Dataset(a) => a.apply(&mut cfg),
        Command::Stats(a) => a.apply(&mut cfg),
        Command::Train(a) => a.apply(&mut cfg),
        Command::Eval(a) => a.apply(&mut cfg),
        Command::Dtw(a) => a.apply(&mut cfg),
        Command::Bench(a) => a.apply(&mut cfg),
    }
    Ok(cfg.resolve())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve_config(&cli)?;
    log::info!(
        "resolved config: {}",
        serde_json::to_string(&cfg).expect("config serialises")
    );
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.into()))?;
    match &cli.command {
        Command::Extract(a) => commands::extract::run(a, &cfg),
        Command::Synth(a) => commands::synth::run(a, &cfg),
        Command::Dataset(a) => commands::dataset::run(a, &cfg),
        Command::Stats(a) => commands::stats::run(a, &cfg),
        Command::Train(a) => commands::train::run(a, &cfg),
        Command::Eval(a) => commands::eval::run(a, &cfg),
        Command::Dtw(a) => commands::dtw::run(a, &cfg),
        Command::Bench(a) => commands::bench::run(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Total(e)) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(e)) => {
            log::error!("internal invariant violated: {e:#}");
            ExitCode::from(3)
        }
    }
}
