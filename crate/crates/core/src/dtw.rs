//! Dynamic time warping distance and a k-nearest-neighbour classifier on top
//! of it.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::DatasetTensor;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DtwError {
    #[error("DTW needs two non-empty series")]
    EmptySeries,
    #[error("band radius {radius} cannot reach the end cell of a {a}x{b} alignment")]
    BandTooNarrow { radius: usize, a: usize, b: usize },
    #[error("band radius must be at least 1")]
    InvalidRadius,
    #[error("the training set is empty")]
    EmptyTrainSet,
    #[error("k = {k} is invalid for {train} training series")]
    InvalidK { k: usize, train: usize },
    #[error("{series} training series but {labels} labels")]
    LabelCount { series: usize, labels: usize },
}

/// Local cost between two aligned samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cost {
    #[default]
    Abs,
    Squared,
}

impl Cost {
    #[inline]
    fn eval<S: Scalar>(self, x: S, y: S) -> S {
        let d = x - y;
        match self {
            Cost::Abs => d.abs(),
            Cost::Squared => d * d,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Sakoe-Chiba band radius; `None` aligns without constraint.
    pub window_radius: Option<usize>,
    pub cost: Cost,
}

impl DtwConfig {
    pub fn validate(&self) -> Result<(), DtwError> {
        match self.window_radius {
            Some(0) => Err(DtwError::InvalidRadius),
            _ => Ok(()),
        }
    }
}

/// DTW distance between `a` and `b`.
///
/// `D(i,j) = cost(a_i, b_j) + min(D(i-1,j), D(i,j-1), D(i-1,j-1))`, with
/// cells outside `|i - j| <= radius` unreachable when a band is set. Only two
/// rows of the shorter length are kept.
pub fn dtw_distance<S: Scalar>(a: &[S], b: &[S], cfg: &DtwConfig) -> Result<S, DtwError> {
    cfg.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    if let Some(r) = cfg.window_radius {
        if a.len().abs_diff(b.len()) > r {
            return Err(DtwError::BandTooNarrow {
                radius: r,
                a: a.len(),
                b: b.len(),
            });
        }
    }
    // both costs are symmetric, so rows can run over the longer series
    let (rows, cols) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let m = cols.len();
    let radius = cfg.window_radius.unwrap_or(usize::MAX);
    let inf = S::infinity();

    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    prev[0] = S::zero();
    for (i, &x) in rows.iter().enumerate() {
        let i = i + 1;
        let lo = i.saturating_sub(radius).max(1);
        let hi = i.saturating_add(radius).min(m);
        cur[lo - 1] = inf;
        if hi < m {
            cur[hi + 1] = inf;
        }
        let mut left = inf;
        for j in lo..=hi {
            let best = prev[j].min(prev[j - 1]).min(left);
            let v = cfg.cost.eval(x, cols[j - 1]) + best;
            cur[j] = v;
            left = v;
        }
        std::mem::swap(&mut prev, &mut cur);
        prev[0] = inf;
    }
    Ok(prev[m])
}

/// Majority vote among the `k` training series closest to `query`.
///
/// Neighbours are ranked by distance, then by training index. A tied vote is
/// won by the class with the smaller summed neighbour distance, then by the
/// lower class index.
pub fn knn_classify<S: Scalar>(
    train: &[&[S]],
    labels: &[usize],
    query: &[S],
    k: usize,
    cfg: &DtwConfig,
) -> Result<usize, DtwError> {
    if train.is_empty() {
        return Err(DtwError::EmptyTrainSet);
    }
    if labels.len() != train.len() {
        return Err(DtwError::LabelCount {
            series: train.len(),
            labels: labels.len(),
        });
    }
    if k == 0 || k > train.len() {
        return Err(DtwError::InvalidK { k, train: train.len() });
    }
    let mut dists: Vec<(S, usize)> = train
        .par_iter()
        .enumerate()
        .map(|(i, t)| dtw_distance(t, query, cfg).map(|d| (d, i)))
        .collect::<Result<_, _>>()?;
    dists.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1)));

    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut votes = vec![0usize; classes];
    let mut sums = vec![S::zero(); classes];
    for &(d, i) in &dists[..k] {
        votes[labels[i]] += 1;
        sums[labels[i]] += d;
    }
    let winner = (0..classes)
        .filter(|&c| votes[c] > 0)
        .min_by(|&x, &y| {
            votes[y]
                .cmp(&votes[x])
                .then(sums[x].partial_cmp(&sums[y]).unwrap_or(Ordering::Equal))
                .then(x.cmp(&y))
        })
        .expect("k >= 1 gives at least one vote");
    Ok(winner)
}

/// Channel 0 of every window in a tensor.
pub fn size_channel<S: Scalar>(tensor: &DatasetTensor<S>) -> Vec<Vec<S>> {
    (0..tensor.n)
        .map(|i| tensor.window(i).iter().step_by(tensor.c).copied().collect())
        .collect()
}

/// Classifies every window of `test` against `train` by k-NN DTW on the size
/// channel.
pub fn classify_tensor<S: Scalar>(
    train: &DatasetTensor<S>,
    test: &DatasetTensor<S>,
    k: usize,
    cfg: &DtwConfig,
) -> Result<Vec<usize>, DtwError> {
    let train_series = size_channel(train);
    let refs: Vec<&[S]> = train_series.iter().map(Vec::as_slice).collect();
    let labels = train.label_indices();
    size_channel(test)
        .iter()
        .map(|q| knn_classify(&refs, &labels, q, k, cfg))
        .collect()
}
