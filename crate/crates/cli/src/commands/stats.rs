use std::path::PathBuf;

use anyhow::{anyhow, Context};
use bitcover_core::dataset::{load_manifest_series, ManifestOptions};
use bitcover_core::stats::{build_kld_matrix, KldMatrix, KldReport};
use serde::Serialize;

use super::emit_json;
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    /// Report JSON path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the class-by-class matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(b) = self.bins {
            cfg.stats.bins = b;
        }
    }
}

#[derive(Debug, Serialize)]
struct Output {
    bins: usize,
    clips: usize,
    report: KldReport,
    matrix: KldMatrix,
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    if cfg.stats.bins == 0 {
        return Err(Failure::Usage(anyhow!("bins must be positive")));
    }
    let opts = ManifestOptions {
        min_clips: cfg.dataset.min_clips,
    };
    let (manifest, series) = load_manifest_series(&args.manifest, opts).context("loading manifest")?;
    let clips: Vec<(usize, Vec<f64>)> = manifest
        .entries
        .iter()
        .zip(&series)
        .map(|(e, s)| {
            let class = manifest.class_index(&e.label).expect("manifest labels are in its class set");
            (class, s.values.iter().map(|&v| v as f64).collect())
        })
        .collect();
    let matrix = build_kld_matrix(&clips, &manifest.classes, cfg.stats.bins).context("building KLD matrix")?;
    if let Some(path) = &args.csv {
        std::fs::write(path, matrix.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let output = Output {
        bins: cfg.stats.bins,
        clips: clips.len(),
        report: matrix.report(),
        matrix,
    };
    emit_json(&output, args.out.as_deref())?;
    Ok(())
}
