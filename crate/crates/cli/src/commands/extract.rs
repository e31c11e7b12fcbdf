use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use bitcover_core::bitstream::{extract_from_bytes, io, FrameSizeSeries};
use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;

use super::{create_dir, emit_json, rate};
use crate::config::Config;
use crate::Failure;

/// Extensions picked up when an input is a directory.
const STREAM_EXTENSIONS: [&str; 5] = ["h264", "264", "avc", "es", "bin"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Annex B files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// JSONL file (default stdout), or a directory for CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Where to write the summary JSON instead of stdout/stderr.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FileError {
    path: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    files: usize,
    frames_total: usize,
    bytes_total: u64,
    wall_seconds: f64,
    frames_per_second: f64,
    failed: Vec<FileError>,
}

fn expand(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| STREAM_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

enum Outcome {
    Parsed { series: FrameSizeSeries, bytes: u64 },
    Failed(String),
    Broken(String),
}

fn extract_one(path: &Path) -> Outcome {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    let id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    match extract_from_bytes(&bytes, &id) {
        Ok(ex) => {
            let total = ex.series.total_bits();
            if total != 8 * bytes.len() as u64 {
                return Outcome::Broken(format!("{id}: access units hold {total} bits, file has {}", 8 * bytes.len()));
            }
            Outcome::Parsed {
                series: ex.series,
                bytes: bytes.len() as u64,
            }
        }
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

fn write_records(series: &[FrameSizeSeries], args: &Args) -> anyhow::Result<()> {
    match args.format {
        Format::Jsonl => match &args.out {
            Some(path) => {
                let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                let mut w = BufWriter::new(file);
                io::write_jsonl(&mut w, series)?;
                w.flush()?;
            }
            None => {
                let mut w = BufWriter::new(std::io::stdout().lock());
                io::write_jsonl(&mut w, series)?;
                w.flush()?;
            }
        },
        Format::Csv => {
            let dir = args.out.as_ref().ok_or_else(|| anyhow!("--format csv needs --out <directory>"))?;
            create_dir(dir)?;
            for s in series {
                let path = dir.join(format!("{}.csv", s.source_id));
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                io::write_csv(BufWriter::new(file), s)?;
            }
        }
    }
    Ok(())
}

pub fn run(args: &Args, _cfg: &Config) -> Result<(), Failure> {
    if args.format == Format::Csv && args.out.is_none() {
        return Err(Failure::Usage(anyhow!("--format csv needs --out <directory>")));
    }
    let files = expand(&args.inputs).map_err(Failure::Usage)?;
    let start = Instant::now();
    let outcomes: Vec<Outcome> = files.par_iter().map(|p| extract_one(p)).collect();
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut series = Vec::new();
    let mut failed = Vec::new();
    let mut bytes_total = 0;
    for (path, outcome) in files.iter().zip(outcomes) {
        match outcome {
            Outcome::Parsed { series: s, bytes } => {
                bytes_total += bytes;
                series.push(s);
            }
            Outcome::Failed(error) => {
                log::warn!("{}: {error}", path.display());
                failed.push(FileError {
                    path: path.display().to_string(),
                    error,
                });
            }
            Outcome::Broken(msg) => return Err(Failure::Invariant(anyhow!(msg))),
        }
    }
    write_records(&series, args)?;

    let frames_total = series.iter().map(FrameSizeSeries::len).sum();
    let summary = Summary {
        files: series.len(),
        frames_total,
        bytes_total,
        wall_seconds,
        frames_per_second: rate(frames_total, wall_seconds),
        failed,
    };
    if let Some(path) = &args.summary {
        emit_json(&summary, Some(path))?;
    } else if args.out.is_some() {
        emit_json(&summary, None)?;
    } else {
        eprintln!("{}", serde_json::to_string(&summary).map_err(anyhow::Error::from)?);
    }
    if series.is_empty() && !files.is_empty() {
        return Err(Failure::Total(anyhow!("all {} inputs failed", files.len())));
    }
    Ok(())
}
