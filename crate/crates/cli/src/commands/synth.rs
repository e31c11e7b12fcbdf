use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use bitcover_core::bitstream::io;
use bitcover_core::dataset::{generate_suite, SyntheticClassSpec};

use super::create_dir;
use crate::config::Config;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output directory for `<clip>.jsonl` files and `manifest.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Preset class to generate; repeat for several (default: all four).
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// Clips per class.
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Rate-controlled target, bits per frame.
    #[arg(long)]
    target_bitrate: Option<f64>,
}

impl Args {
    pub fn apply(&self, cfg: &mut Config) {
        if !self.presets.is_empty() {
            cfg.synth.presets = self.presets.clone();
        }
        if let Some(c) = self.clips {
            cfg.synth.clips = c;
        }
        if let Some(f) = self.frames {
            cfg.synth.frames = f;
        }
        if self.target_bitrate.is_some() {
            cfg.synth.target_bitrate = self.target_bitrate;
        }
    }
}

pub fn run(args: &Args, cfg: &Config) -> Result<(), Failure> {
    let s = &cfg.synth;
    let classes: Vec<(String, SyntheticClassSpec)> = s
        .presets
        .iter()
        .map(|name| {
            SyntheticClassSpec::preset(name)
                .map(|spec| (name.clone(), spec.with_target_bitrate(s.target_bitrate)))
                .ok_or_else(|| anyhow!("unknown preset {name:?}"))
        })
        .collect::<anyhow::Result<_>>()
        .map_err(Failure::Usage)?;
    if s.frames == 0 {
        return Err(Failure::Usage(anyhow!("frames must be at least 1")));
    }
    let suite = generate_suite(&classes, s.clips, s.frames, cfg.seed).map_err(|e| Failure::Usage(e.into()))?;

    create_dir(&args.out)?;
    let target = s.target_bitrate.map_or("none".to_string(), |b| b.to_string());
    let mut manifest = String::from("path,label,tags\n");
    for series in &suite {
        let name = format!("{}.jsonl", series.source_id);
        let path = args.out.join(&name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        io::write_jsonl(&mut w, std::slice::from_ref(series)).context("writing series")?;
        w.flush().context("writing series")?;
        let label = series.label.as_deref().unwrap_or_default();
        manifest.push_str(&format!("{name},{label},preset={label};target={target}\n"));
    }
    let path = args.out.join("manifest.csv");
    std::fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {} clips to {}", suite.len(), args.out.display());
    Ok(())
}
