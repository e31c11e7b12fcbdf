use std::path::PathBuf;
use std::time::Instant;

use anyhow::anyhow;
use bitcover_core::dtw::{classify_tensor, Cost};

use super::{emit_json, hard_predictions, load_tensor, rate, score};
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Reference tensor (`.bct`).
    #[arg(long)]
    train: PathBuf,
    /// Query tensor (`.bct`).
    #[arg(long)]
    test: PathBuf,
    /// Report JSON path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Sakoe-Chiba band radius.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long, value_parser = parse_cost)]
    cost: Option<Cost>,
    /// Classify only this many queries, evenly spaced through the test set.
    #[arg(long)]
    max_queries: Option<usize>,
}

fn parse_cost(s: &str) -> Result<Cost, String> {
    match s {
        "abs" => Ok(Cost::Abs),
        "squared" => Ok(Cost::Squared),
        _ => Err(format!("expected abs or squared, got {s:?}")),
    }
}

/// `min(count, n)` row indices spread evenly over `0..n`.
fn spaced_rows(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|i| i * n / count).collect()
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(k) = self.k {
            cfg.dtw.k = k;
        }
        if self.radius.is_some() {
            cfg.dtw.window_radius = self.radius;
        }
        if let Some(c) = self.cost {
            cfg.dtw.cost = c;
        }
    }
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    let train = load_tensor(&args.train)?;
    let mut test = load_tensor(&args.test)?;
    if let Some(q) = args.max_queries {
        test = test.select(&spaced_rows(test.n, q));
    }
    if train.class_names != test.class_names {
        return Err(Failure::Usage(anyhow!("train and test tensors list different classes")));
    }
    let start = Instant::now();
    let classes = classify_tensor(&train, &test, cfg.dtw.k, &cfg.dtw.dtw_config()).map_err(|e| Failure::Usage(e.into()))?;
    let seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} queries against {} references in {seconds:.3}s ({:.0} frames/s)",
        test.n,
        train.n,
        rate(test.n * test.t, seconds)
    );
    let scores = score(&test, &hard_predictions(&classes, test.k()))?;
    emit_json(&scores, args.out.as_deref())?;
    Ok(())
}
