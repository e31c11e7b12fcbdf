use std::path::PathBuf;

use anyhow::Context;
use bitcover_core::dataset::{build_tensor, load_manifest_series, stratified_split, ManifestOptions, Normalization};
use bitcover_core::series::write_tensor;
use bitcover_core::{FrameSizeSeries, Tensor32};

use super::create_dir;
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for `train.bct`/`test.bct` (or `all.bct`).
    #[arg(long)]
    out: PathBuf,
    /// Window length in frames.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Add the I/P/B channel.
    #[arg(long)]
    frame_type_channel: bool,
    #[arg(long, value_parser = parse_normalization)]
    normalization: Option<Normalization>,
    /// Share of each class's clips that goes to training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Write every clip to a single `all.bct`.
    #[arg(long)]
    no_split: bool,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    match s {
        "zscore" => Ok(Normalization::Zscore),
        "none" => Ok(Normalization::None),
        _ => Err(format!("expected zscore or none, got {s:?}")),
    }
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        let d = &mut cfg.dataset;
        if let Some(w) = self.window {
            d.window = w;
            if self.stride.is_none() {
                d.stride = None;
            }
        }
        if self.stride.is_some() {
            d.stride = self.stride;
        }
        if self.frame_type_channel {
            d.frame_type_channel = true;
        }
        if let Some(n) = self.normalization {
            d.normalization = n;
        }
        if let Some(f) = self.train_fraction {
            d.train_fraction = f;
        }
    }
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    let d = &cfg.dataset;
    let wc = d.window_config();
    if wc.len == 0 || wc.stride == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("window and stride must be positive")));
    }
    let opts = ManifestOptions { min_clips: d.min_clips };
    let (manifest, series) = load_manifest_series(&args.manifest, opts).context("loading manifest")?;
    create_dir(&args.out)?;

    let write = |name: &str, part: &[FrameSizeSeries]| -> anyhow::Result<()> {
        let tensor: Tensor32 = build_tensor(part, &manifest.classes, &wc, d.normalization)
            .with_context(|| format!("windowing the {name} clips"))?;
        let path = args.out.join(format!("{name}.bct"));
        write_tensor(&path, &tensor).with_context(|| format!("writing {}", path.display()))?;
        log::info!("{name}: {} clips, {} windows of {}x{}", part.len(), tensor.n, tensor.t, tensor.c);
        Ok(())
    };
    if args.no_split {
        write("all", &series)?;
    } else {
        let (train, test) =
            stratified_split(&series, |s| s.label.as_deref().unwrap_or_default(), d.train_fraction, cfg.seed).map_err(|e| Failure::Usage(e.into()))?;
        write("train", &train)?;
        write("test", &test)?;
    }
    Ok(())
}
