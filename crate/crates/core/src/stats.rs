//! Histogram Kullback-Leibler divergence between frame-size distributions.
//!
//! Each clip is summarised by a histogram of its frame sizes over bin edges
//! shared by the whole comparison set. Class-to-class divergence is the mean
//! clip-pair divergence; the diagonal uses distinct pairs within a class.
//! All logs are natural, so divergences are in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive smoothing applied to every bin before renormalising.
pub const SMOOTHING: f64 = 1e-6;
pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot build a histogram from no values")]
    EmptyInput,
    #[error("a histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("histograms have different bin edges")]
    BinMismatch,
    #[error("class {class:?} has {clips} clip(s); at least 2 are needed")]
    InsufficientClips { class: String, clips: usize },
    #[error("invalid histogram: {0}")]
    Invalid(String),
}

/// A normalised, smoothed histogram of frame sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeHistogram {
    bin_edges: Vec<f64>,
    probs: Vec<f64>,
}

impl SizeHistogram {
    /// Wraps explicit edges and probabilities after checking the invariants.
    pub fn from_parts(bin_edges: Vec<f64>, probs: Vec<f64>) -> Result<Self, StatsError> {
        if bin_edges.len() != probs.len() + 1 || probs.len() < 2 {
            return Err(StatsError::Invalid(format!(
                "{} edges for {} bins",
                bin_edges.len(),
                probs.len()
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(StatsError::Invalid("edges must strictly increase".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(StatsError::Invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { bin_edges, probs })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }
}

/// `bins + 1` equally spaced edges over `[lo, hi]`; a zero-width range is
/// widened by half a unit on each side.
pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    edges
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Histogram over explicit edges. Values outside the edges are counted in
/// the nearest end bin; the last bin is closed on the right.
pub fn histogram_with_edges(values: &[f64], edges: &[f64]) -> Result<SizeHistogram, StatsError> {
    histogram_with_smoothing(values, edges, SMOOTHING)
}

/// [`histogram_with_edges`] with an explicit additive smoothing `alpha`.
pub fn histogram_with_smoothing(values: &[f64], edges: &[f64], alpha: f64) -> Result<SizeHistogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let bins = edges.len().saturating_sub(1);
    if bins < 2 {
        return Err(StatsError::TooFewBins(bins));
    }
    let (lo, hi) = (edges[0], edges[bins]);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut b = ((v - lo) / width).floor();
        if !(b >= 0.0) {
            b = 0.0;
        }
        let mut b = (b as usize).min(bins - 1);
        // guard against rounding across an edge
        while b > 0 && v < edges[b] {
            b -= 1;
        }
        while b + 1 < bins && v >= edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    let n = values.len() as f64;
    let norm = 1.0 + alpha * bins as f64;
    let probs = counts.iter().map(|&c| (c as f64 / n + alpha) / norm).collect();
    Ok(SizeHistogram {
        bin_edges: edges.to_vec(),
        probs,
    })
}

/// Equal-width histogram with `bins` bins over `range`, or over the data's
/// own min and max when no range is given.
pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<SizeHistogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if bins < 2 {
        return Err(StatsError::TooFewBins(bins));
    }
    let (lo, hi) = range.unwrap_or_else(|| min_max(values));
    histogram_with_edges(values, &equal_width_edges(lo, hi, bins))
}

/// `D_KL(p || q) = sum_i p_i ln(p_i / q_i)` in nats.
pub fn kld(p: &SizeHistogram, q: &SizeHistogram) -> Result<f64, StatsError> {
    if p.bin_edges != q.bin_edges {
        return Err(StatsError::BinMismatch);
    }
    let d: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    // Gibbs' inequality; only rounding can push the sum below zero
    Ok(d.max(0.0))
}

/// Mean clip-pair divergence between every pair of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldMatrix {
    pub class_names: Vec<String>,
    /// `values[i][j]` = mean `D_KL(clip of class i || clip of class j)`.
    pub values: Vec<Vec<f64>>,
}

/// Summary used for plotting and for the separability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KldReport {
    pub diag_mean: f64,
    pub diag_max: f64,
    pub offdiag_min: f64,
    /// `offdiag_min / diag_max`.
    pub separability_ratio: f64,
}

impl KldMatrix {
    pub fn report(&self) -> KldReport {
        let k = self.class_names.len();
        let diag: Vec<f64> = (0..k).map(|i| self.values[i][i]).collect();
        let offdiag_min = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.values[i][j])
            .fold(f64::INFINITY, f64::min);
        let diag_max = diag.iter().copied().fold(0.0, f64::max);
        KldReport {
            diag_mean: diag.iter().sum::<f64>() / k.max(1) as f64,
            diag_max,
            offdiag_min,
            separability_ratio: offdiag_min / diag_max,
        }
    }

    /// CSV with a header row of class names and one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = format!("class,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }
}

/// Builds the class divergence matrix from labelled clips.
///
/// `clips` pairs a class index with that clip's frame sizes. Histograms use
/// `bins` edges spanning every value in the set.
pub fn build_kld_matrix(
    clips: &[(usize, Vec<f64>)],
    class_names: &[String],
    bins: usize,
) -> Result<KldMatrix, StatsError> {
    let k = class_names.len();
    let mut per_class = vec![0usize; k];
    for (c, values) in clips {
        if values.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        per_class[*c] += 1;
    }
    if let Some((i, &n)) = per_class.iter().enumerate().find(|(_, &n)| n < 2) {
        return Err(StatsError::InsufficientClips {
            class: class_names[i].clone(),
            clips: n,
        });
    }
    let (lo, hi) = clips
        .iter()
        .map(|(_, v)| min_max(v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi)));
    let edges = equal_width_edges(lo, hi, bins);
    let hists: Vec<SizeHistogram> = clips
        .iter()
        .map(|(_, v)| histogram_with_edges(v, &edges))
        .collect::<Result<_, _>>()?;

    // one row of clip-pair divergences per clip, accumulated per class pair
    let rows: Vec<Vec<(usize, f64)>> = hists
        .par_iter()
        .enumerate()
        .map(|(a, ha)| {
            hists
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, hb)| (b, kld(ha, hb).expect("shared edges")))
                .collect()
        })
        .collect();
    let mut sums = vec![vec![0.0f64; k]; k];
    let mut counts = vec![vec![0usize; k]; k];
    for (a, row) in rows.iter().enumerate() {
        let ca = clips[a].0;
        for &(b, d) in row {
            let cb = clips[b].0;
            sums[ca][cb] += d;
            counts[ca][cb] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s.iter().zip(c).map(|(&s, &c)| s / c as f64).collect())
        .collect();
    Ok(KldMatrix {
        class_names: class_names.to_vec(),
        values,
    })
}
