//! Manifests, clip-level splits, evaluation metrics and the synthetic
//! frame-size generator.

mod manifest;
mod metrics;
mod split;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_manifest, parse_manifest, Manifest, ManifestEntry, ManifestOptions};
pub use metrics::{clip_majority_vote, evaluate, ClassReport, ClipVote};
pub use split::stratified_split;
pub use synth::{
    clip_seed, generate_suite, generate_synthetic, preset_classes, RateControl, SyntheticClassSpec, PRESET_NAMES,
};

use crate::bitstream::{self, FrameSizeSeries};
use crate::scalar::Scalar;
use crate::series::{self, DatasetTensor, SeriesError, WindowConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate path {0}")]
    DuplicatePath(String),
    #[error("label {label} has {clips} clips, fewer than the required {min_clips}")]
    UnknownLabel { label: String, clips: usize, min_clips: usize },
    #[error("class {label} has {clips} clip(s); a split needs at least 2")]
    ClassTooSmall { label: String, clips: usize },
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("clip {0} has windows with different labels")]
    InconsistentClipLabel(String),
    #[error("series {0} has no label")]
    MissingLabel(String),
    #[error("series {source_id} has label {label}, not among the classes")]
    UnlistedLabel { source_id: String, label: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Per-window scaling applied before windows reach a classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Zero mean, unit variance per window.
    #[default]
    Zscore,
    /// Raw sizes in bits.
    None,
}

/// Windows every labelled series and stacks them into one tensor. Labels are
/// looked up in `class_names`.
pub fn build_tensor<S: Scalar>(
    series: &[FrameSizeSeries],
    class_names: &[String],
    window: &WindowConfig,
    normalization: Normalization,
) -> Result<DatasetTensor<S>, DatasetError> {
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for s in series {
        let label = s.label.as_deref().ok_or_else(|| DatasetError::MissingLabel(s.source_id.clone()))?;
        let class = class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| DatasetError::UnlistedLabel {
                source_id: s.source_id.clone(),
                label: label.to_string(),
            })?;
        for w in series::window_series::<S>(s, window) {
            windows.push(match normalization {
                Normalization::Zscore => series::znormalize(w),
                Normalization::None => w,
            });
            labels.push(class);
        }
    }
    Ok(series::assemble(&windows, &labels, class_names)?)
}

/// Reads one series per manifest entry: `.jsonl` files hold parsed series
/// (first record), anything else is parsed as an Annex B stream. The entry's
/// label overrides any label stored in the file.
pub fn load_entry(entry: &ManifestEntry) -> Result<FrameSizeSeries, DatasetError> {
    let io_err = |m: String| DatasetError::Io {
        path: entry.path.display().to_string(),
        message: m,
    };
    let mut series = if entry.path.extension().is_some_and(|e| e == "jsonl") {
        let file = std::fs::File::open(&entry.path).map_err(|e| io_err(e.to_string()))?;
        bitstream::io::read_jsonl(std::io::BufReader::new(file))
            .map_err(|e| io_err(e.to_string()))?
            .into_iter()
            .next()
            .ok_or_else(|| io_err("no series records".into()))?
    } else {
        bitstream::extract_frame_sizes(&entry.path).map_err(|e| io_err(e.to_string()))?
    };
    series.label = Some(entry.label.clone());
    Ok(series)
}

/// Loads every series named in a manifest file.
pub fn load_manifest_series(
    path: impl AsRef<Path>,
    opts: ManifestOptions,
) -> Result<(Manifest, Vec<FrameSizeSeries>), DatasetError> {
    let manifest = load_manifest(path, opts)?;
    let series = manifest.entries.iter().map(load_entry).collect::<Result<_, _>>()?;
    Ok((manifest, series))
}
