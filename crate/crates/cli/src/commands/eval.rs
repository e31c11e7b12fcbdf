use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use bitcover_core::model::{load_checkpoint, predict};
use bitcover_core::ModelParams32;

use super::{emit_json, load_tensor, rate, score};
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Test tensor (`.bct`).
    #[arg(long)]
    data: PathBuf,
    /// Report JSON path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(b) = self.batch_size {
            cfg.bench.batch_size = b;
        }
    }
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    let params: ModelParams32 =
        load_checkpoint(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let data = load_tensor(&args.data)?;
    if data.class_names.len() != params.config.num_classes {
        return Err(Failure::Usage(anyhow!(
            "checkpoint has {} classes, data has {}",
            params.config.num_classes,
            data.class_names.len()
        )));
    }
    let start = Instant::now();
    let predictions = predict(&params, &data, cfg.bench.batch_size.max(1)).map_err(|e| Failure::Usage(e.into()))?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} windows in {seconds:.3}s ({:.0} frames/s)",
        data.n,
        rate(data.n * data.t, seconds)
    );
    let scores = score(&data, &predictions)?;
    let counted: usize = scores.windows.confusion.iter().flatten().sum();
    if counted != data.n {
        return Err(Failure::Invariant(anyhow!("confusion matrix counts {counted} of {} windows", data.n)));
    }
    emit_json(&scores, args.out.as_deref())?;
    Ok(())
}
