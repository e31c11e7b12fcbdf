use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use bitcover_core::dataset::stratified_split;
use bitcover_core::model::{save_checkpoint, train, ModelError};
use bitcover_core::Tensor32;
use serde::Serialize;

use super::{emit_json, load_tensor};
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training tensor (`.bct`).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path for the best epoch.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSONL history.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Summary JSON path (default stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Filters per block, e.g. `32,64,64`.
    #[arg(long, value_parser = parse_triple)]
    filters: Option<[usize; 3]>,
    /// Kernel sizes per block, e.g. `8,5,3`.
    #[arg(long, value_parser = parse_triple)]
    kernels: Option<[usize; 3]>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Share of training clips held out for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(f) = self.filters {
            cfg.model.filters = f;
        }
        if let Some(k) = self.kernels {
            cfg.model.kernels = k;
        }
        let t = &mut cfg.train;
        if let Some(e) = self.epochs {
            t.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(lr) = self.lr {
            t.initial_lr = lr;
        }
        if let Some(v) = self.val_fraction {
            t.validation_fraction = v;
        }
    }
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<usize>| format!("expected 3 comma-separated values, got {}", p.len()))
}

/// Holds out whole clips (by window origin) for validation, stratified by
/// class.
fn clip_split(data: &Tensor32, val_fraction: f64, seed: u64) -> anyhow::Result<(Tensor32, Tensor32)> {
    let labels = data.label_indices();
    let mut clips: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, origin) in data.origins.iter().enumerate() {
        clips.entry(origin.source_id.as_str()).or_insert((labels[i], Vec::new())).1.push(i);
    }
    let items: Vec<(&str, String)> = clips
        .iter()
        .map(|(id, (label, _))| (*id, data.class_names[*label].clone()))
        .collect();
    let (train_ids, val_ids) = stratified_split(&items, |it| it.1.as_str(), 1.0 - val_fraction, seed)?;
    let rows = |ids: &[(&str, String)]| -> Vec<usize> {
        let mut r: Vec<usize> = ids.iter().flat_map(|(id, _)| clips[id].1.iter().copied()).collect();
        r.sort_unstable();
        r
    };
    Ok((data.select(&rows(&train_ids)), data.select(&rows(&val_ids))))
}

#[derive(Debug, Serialize)]
struct Summary {
    train_windows: usize,
    val_windows: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    best_val_acc: f64,
    stopped_early: bool,
    trainable_parameters: usize,
    wall_seconds: f64,
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    cfg.train.validate().map_err(|e| Failure::Usage(e.into()))?;
    let data = load_tensor(&args.data)?;
    let (train_set, val_set) = clip_split(&data, cfg.train.validation_fraction, cfg.seed)?;
    let model_cfg = cfg.model.model_config(data.t, data.c, data.k(), cfg.seed);
    model_cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    log::info!(
        "training on {} windows, validating on {} ({})",
        train_set.n,
        val_set.n,
        model_cfg.shape_summary()
    );

    let start = Instant::now();
    let outcome = match train(&model_cfg, &cfg.train, &train_set, &val_set) {
        Ok(o) => o,
        Err(e @ ModelError::DivergedLoss { .. }) => return Err(Failure::Invariant(e.into())),
        Err(e) => return Err(Failure::Total(e.into())),
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    if !outcome.params.all_finite() {
        return Err(Failure::Invariant(anyhow!("best-epoch parameters are not finite")));
    }
    save_checkpoint(&outcome.params, &args.out).with_context(|| format!("writing {}", args.out.display()))?;

    if let Some(path) = &args.history {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for rec in &outcome.history {
            writeln!(w, "{}", serde_json::to_string(rec).map_err(anyhow::Error::from)?).context("writing history")?;
        }
        w.flush().context("writing history")?;
    }
    let best = &outcome.history[outcome.best_epoch];
    let summary = Summary {
        train_windows: train_set.n,
        val_windows: val_set.n,
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        best_val_acc: best.val_acc,
        stopped_early: outcome.stopped_early,
        trainable_parameters: outcome.params.trainable_count(),
        wall_seconds,
    };
    emit_json(&summary, args.summary.as_deref())?;
    Ok(())
}
