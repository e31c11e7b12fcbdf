use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use bitcover_core::dtw::{knn_classify, size_channel};
use bitcover_core::model::{load_checkpoint, predict};
use bitcover_core::ModelParams32;
use serde::Serialize;

use super::{emit_json, load_tensor, rate};
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Windows to classify (`.bct`); without it the report is empty.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report JSON path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Also time 1-NN DTW on the same windows.
    #[arg(long)]
    with_dtw: bool,
    /// DTW reference set (defaults to the benchmark windows themselves).
    #[arg(long)]
    dtw_reference: Option<PathBuf>,
    /// Time DTW on only the first N windows.
    #[arg(long)]
    dtw_queries: Option<usize>,
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(b) = self.batch_size {
            cfg.bench.batch_size = b;
        }
        if let Some(f) = self.fps {
            cfg.bench.fps = f;
        }
    }
}

#[derive(Debug, Default, Serialize)]
struct Timing {
    windows: usize,
    frames: usize,
    seconds: f64,
    frames_per_second: f64,
    real_time_factor: f64,
}

impl Timing {
    fn new(windows: usize, frames: usize, seconds: f64, fps: f64) -> Self {
        let frames_per_second = rate(frames, seconds);
        Self {
            windows,
            frames,
            seconds,
            frames_per_second,
            real_time_factor: frames_per_second / fps,
        }
    }
}

#[derive(Debug, Serialize)]
struct DtwTiming {
    reference_windows: usize,
    #[serde(flatten)]
    timing: Timing,
}

#[derive(Debug, Serialize)]
struct Report {
    fps: f64,
    batch_size: usize,
    neural: Timing,
    #[serde(skip_serializing_if = "Option::is_none")]
    dtw: Option<DtwTiming>,
    /// Neural frames/s over DTW frames/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    speed_ratio: Option<f64>,
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    let b = &cfg.bench;
    if !(b.fps > 0.0) || b.batch_size == 0 {
        return Err(Failure::Usage(anyhow!("fps and batch size must be positive")));
    }
    let params: ModelParams32 =
        load_checkpoint(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let mut report = Report {
        fps: b.fps,
        batch_size: b.batch_size,
        neural: Timing::default(),
        dtw: None,
        speed_ratio: None,
    };
    let Some(data_path) = &args.data else {
        emit_json(&report, args.out.as_deref())?;
        return Ok(());
    };
    let data = load_tensor(data_path)?;
    if data.n == 0 {
        emit_json(&report, args.out.as_deref())?;
        return Ok(());
    }

    let start = Instant::now();
    let predictions = predict(&params, &data, b.batch_size).map_err(|e| Failure::Usage(e.into()))?;
    let seconds = start.elapsed().as_secs_f64();
    if predictions.len() != data.n {
        return Err(Failure::Invariant(anyhow!("{} predictions for {} windows", predictions.len(), data.n)));
    }
    report.neural = Timing::new(data.n, data.n * data.t, seconds, b.fps);

    if args.with_dtw {
        let reference = match &args.dtw_reference {
            Some(p) => load_tensor(p)?,
            None => data.clone(),
        };
        let ref_series = size_channel(&reference);
        let refs: Vec<&[f32]> = ref_series.iter().map(Vec::as_slice).collect();
        let labels = reference.label_indices();
        let queries = size_channel(&data);
        let q = args.dtw_queries.unwrap_or(queries.len()).min(queries.len());
        let dtw_cfg = cfg.dtw.dtw_config();
        let start = Instant::now();
        for query in &queries[..q] {
            knn_classify(&refs, &labels, query, cfg.dtw.k, &dtw_cfg).map_err(|e| Failure::Usage(e.into()))?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let timing = Timing::new(q, q * data.t, seconds, b.fps);
        if timing.frames_per_second > 0.0 {
            report.speed_ratio = Some(report.neural.frames_per_second / timing.frames_per_second);
        }
        report.dtw = Some(DtwTiming {
            reference_windows: reference.n,
            timing,
        });
    }
    log::info!(
        "neural: {:.0} frames/s, {:.0}x real time",
        report.neural.frames_per_second,
        report.neural.real_time_factor
    );
    emit_json(&report, args.out.as_deref())?;
    Ok(())
}
