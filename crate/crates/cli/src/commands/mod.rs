pub mod bench;
pub mod dataset;
pub mod dtw;
pub mod eval;
pub mod extract;
pub mod stats;
pub mod synth;
pub mod train;

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use bitcover_core::dataset::{clip_majority_vote, evaluate, ClassReport, ClipVote};
use bitcover_core::model::Prediction;
use bitcover_core::series::{read_tensor, DatasetTensor};
use bitcover_core::Tensor32;
use serde::Serialize;

/// Pretty JSON to `path`, or to stdout when no path is given.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush().context("writing stdout")
        }
    }
}

pub fn load_tensor(path: &Path) -> anyhow::Result<Tensor32> {
    read_tensor(path).with_context(|| format!("reading tensor {}", path.display()))
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Window-level and clip-level (majority vote) reports for one set of
/// window predictions.
#[derive(Debug, Serialize)]
pub struct Scores {
    pub windows: ClassReport,
    pub clips: ClassReport,
    pub votes: Vec<ClipVote>,
}

pub fn score<S>(tensor: &DatasetTensor<S>, predictions: &[Prediction]) -> anyhow::Result<Scores>
where
    S: bitcover_core::scalar::Scalar,
{
    let truth = tensor.label_indices();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted_class).collect();
    let windows = evaluate(&predicted, &truth, &tensor.class_names)?;
    let ids: Vec<String> = tensor.origins.iter().map(|o| o.source_id.clone()).collect();
    let votes = clip_majority_vote(predictions, &truth, &ids)?;
    let clip_pred: Vec<usize> = votes.iter().map(|v| v.predicted).collect();
    let clip_truth: Vec<usize> = votes.iter().map(|v| v.truth).collect();
    let clips = evaluate(&clip_pred, &clip_truth, &tensor.class_names)?;
    Ok(Scores { windows, clips, votes })
}

/// Hard labels as one-hot predictions, so DTW results can share the vote.
pub fn hard_predictions(classes: &[usize], k: usize) -> Vec<Prediction> {
    classes
        .iter()
        .map(|&c| {
            let mut probs = vec![0.0; k];
            probs[c] = 1.0;
            Prediction {
                probs,
                predicted_class: c,
            }
        })
        .collect()
}

pub fn rate(frames: usize, seconds: f64) -> f64 {
    if seconds > 0.0 {
        frames as f64 / seconds
    } else {
        0.0
    }
}
