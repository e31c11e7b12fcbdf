use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::model::Prediction;

/// Confusion matrix (rows: true class, columns: predicted class) and the
/// metrics derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Classes never predicted; their precision is reported as 0.
    pub unpredicted_classes: Vec<usize>,
    pub total: usize,
}

pub fn evaluate(predicted: &[usize], truth: &[usize], class_names: &[String]) -> Result<ClassReport, DatasetError> {
    if predicted.len() != truth.len() {
        return Err(DatasetError::LengthMismatch {
            predictions: predicted.len(),
            labels: truth.len(),
        });
    }
    let k = class_names.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(DatasetError::LabelOutOfRange { label: p.max(t), classes: k });
        }
        confusion[t][p] += 1;
    }
    let total = predicted.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let col_sum = |j: usize| (0..k).map(|i| confusion[i][j]).sum::<usize>();
    let precision: Vec<f64> = (0..k).map(|i| ratio(confusion[i][i], col_sum(i))).collect();
    let recall: Vec<f64> = (0..k).map(|i| ratio(confusion[i][i], confusion[i].iter().sum())).collect();
    let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(ClassReport {
        class_names: class_names.to_vec(),
        unpredicted_classes: (0..k).filter(|&j| col_sum(j) == 0).collect(),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        accuracy: ratio(trace, total),
        precision,
        recall,
        confusion,
        total,
    })
}

/// One vote per clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipVote {
    pub source_id: String,
    pub predicted: usize,
    pub truth: usize,
    pub windows: usize,
}

/// Majority vote over each clip's windows. Ties go to the class with the
/// larger summed probability, then to the lower class index. Clips are
/// returned sorted by `source_id`.
pub fn clip_majority_vote(
    predictions: &[Prediction],
    truth: &[usize],
    source_ids: &[String],
) -> Result<Vec<ClipVote>, DatasetError> {
    if predictions.len() != truth.len() || truth.len() != source_ids.len() {
        return Err(DatasetError::LengthMismatch {
            predictions: predictions.len(),
            labels: truth.len(),
        });
    }
    let k = predictions.first().map_or(0, |p| p.probs.len());
    let mut clips: BTreeMap<&str, (Vec<usize>, Vec<f64>, usize, usize)> = BTreeMap::new();
    for ((p, &t), id) in predictions.iter().zip(truth).zip(source_ids) {
        let entry = clips.entry(id).or_insert_with(|| (vec![0; k], vec![0.0; k], t, 0));
        if entry.2 != t {
            return Err(DatasetError::InconsistentClipLabel(id.clone()));
        }
        entry.0[p.predicted_class] += 1;
        for (acc, &q) in entry.1.iter_mut().zip(&p.probs) {
            *acc += q;
        }
        entry.3 += 1;
    }
    Ok(clips
        .into_iter()
        .map(|(id, (votes, mass, t, windows))| {
            let predicted = (0..k)
                .max_by(|&a, &b| {
                    votes[a]
                        .cmp(&votes[b])
                        .then(mass[a].total_cmp(&mass[b]))
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            ClipVote {
                source_id: id.to_string(),
                predicted,
                truth: t,
                windows,
            }
        })
        .collect())
}
