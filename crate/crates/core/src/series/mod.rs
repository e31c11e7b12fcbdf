//! Fixed-length windows over frame-size series and the dataset tensor built
//! from them.

mod tensor_file;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstream::{FrameSizeSeries, FrameType};
use crate::scalar::Scalar;

pub use tensor_file::{read_tensor, sidecar_path, write_tensor, TENSOR_FORMAT_VERSION};

/// Standard deviation below which a window is treated as constant.
pub const CONSTANT_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("window {index} has shape {found_t}x{found_c}, expected {expected_t}x{expected_c}")]
    ShapeMismatch {
        index: usize,
        expected_t: usize,
        expected_c: usize,
        found_t: usize,
        found_c: usize,
    },
    #[error("label {label} of window {index} is outside 0..{classes}")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("{windows} windows but {labels} labels")]
    LabelCount { windows: usize, labels: usize },
    #[error("a dataset needs at least one window")]
    Empty,
    #[error("bad tensor file: {0}")]
    Format(String),
    #[error("tensor file version {found}, this build reads {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub source_id: String,
    pub start_frame: usize,
}

/// Windowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Frames per window.
    pub len: usize,
    /// Frames between window starts.
    pub stride: usize,
    /// Adds a second channel encoding I/P/B as 1/0/-1.
    #[serde(default)]
    pub frame_type_channel: bool,
}

impl WindowConfig {
    /// Non-overlapping windows of `len` frames.
    pub fn new(len: usize) -> Self {
        Self {
            len,
            stride: len,
            frame_type_channel: false,
        }
    }

    pub fn channels(&self) -> usize {
        if self.frame_type_channel {
            2
        } else {
            1
        }
    }
}

/// A `len x channels` slice of one series, stored time-major
/// (`values[t * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Window<S> {
    pub values: Vec<S>,
    pub channels: usize,
    pub label: Option<usize>,
    pub origin: WindowOrigin,
    /// The source was shorter than the window and was padded.
    pub padded: bool,
    /// The source had no frames at all.
    pub degenerate: bool,
    /// Set by [`znormalize`] when the size channel had no variance.
    pub constant: bool,
}

impl<S: Scalar> Window<S> {
    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of one channel in time order.
    pub fn channel(&self, c: usize) -> impl Iterator<Item = S> + '_ {
        self.values.iter().skip(c).step_by(self.channels).copied()
    }
}

fn frame_type_code<S: Scalar>(t: FrameType) -> S {
    match t {
        FrameType::I => S::one(),
        FrameType::B => -S::one(),
        FrameType::P | FrameType::Unknown => S::zero(),
    }
}

/// Number of windows [`window_series`] produces for a series of `len` frames.
pub fn window_count(len: usize, cfg: &WindowConfig) -> usize {
    if len < cfg.len {
        1
    } else {
        (len - cfg.len) / cfg.stride + 1
    }
}

/// Cuts a series into windows of `cfg.len` frames, `cfg.stride` apart.
///
/// A series shorter than the window yields a single window right-padded with
/// the mean of the frames it does have; an empty series yields one all-zero
/// window flagged `degenerate`. Values are raw sizes in bits.
pub fn window_series<S: Scalar>(series: &FrameSizeSeries, cfg: &WindowConfig) -> Vec<Window<S>> {
    assert!(cfg.len >= 1 && cfg.stride >= 1, "window length and stride must be positive");
    let channels = cfg.channels();
    let frames = series.values.len();
    let label = None;

    let build = |start: usize| -> Window<S> {
        let end = (start + cfg.len).min(frames);
        let mut values = Vec::with_capacity(cfg.len * channels);
        for t in start..end {
            values.push(S::from_u64(series.values[t]).unwrap_or_else(S::max_value));
            if cfg.frame_type_channel {
                values.push(frame_type_code(series.frame_types[t]));
            }
        }
        let have = end - start;
        let padded = have < cfg.len;
        if padded {
            let mean = if have == 0 {
                S::zero()
            } else {
                values.iter().step_by(channels).copied().sum::<S>() / S::from_usize_lossy(have)
            };
            for _ in have..cfg.len {
                values.push(mean);
                if cfg.frame_type_channel {
                    values.push(S::zero());
                }
            }
        }
        Window {
            values,
            channels,
            label,
            origin: WindowOrigin {
                source_id: series.source_id.clone(),
                start_frame: start,
            },
            padded,
            degenerate: frames == 0,
            constant: false,
        }
    };

    (0..window_count(frames, cfg)).map(|i| build(i * cfg.stride)).collect()
}

/// Z-normalizes the size channel (channel 0) with the population standard
/// deviation. A constant channel becomes all zeros and sets `constant`. The
/// frame-type channel, if any, is left alone.
pub fn znormalize<S: Scalar>(mut window: Window<S>) -> Window<S> {
    znormalize_in_place(&mut window.values, window.channels, &mut window.constant);
    window
}

fn znormalize_in_place<S: Scalar>(values: &mut [S], channels: usize, constant: &mut bool) {
    let n = values.len() / channels;
    if n == 0 {
        *constant = true;
        return;
    }
    // accumulate in f64 so f32 windows of thousands of frames stay exact enough
    let mut sum = 0.0f64;
    for v in values.iter().step_by(channels) {
        sum += v.to_f64_lossy();
    }
    let mean = sum / n as f64;
    let mut ss = 0.0f64;
    for v in values.iter().step_by(channels) {
        let d = v.to_f64_lossy() - mean;
        ss += d * d;
    }
    let sd = (ss / n as f64).sqrt();
    if sd < CONSTANT_EPS {
        *constant = true;
        for v in values.iter_mut().step_by(channels) {
            *v = S::zero();
        }
        return;
    }
    for v in values.iter_mut().step_by(channels) {
        *v = S::from_f64_lossy((v.to_f64_lossy() - mean) / sd);
    }
}

/// `N x T x C` windows with one-hot labels over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTensor<S> {
    pub n: usize,
    pub t: usize,
    pub c: usize,
    /// `n * t * c` values, window-major then time-major.
    pub data: Vec<S>,
    /// `n * k` one-hot rows.
    pub labels: Vec<S>,
    pub class_names: Vec<String>,
    pub origins: Vec<WindowOrigin>,
}

impl<S: Scalar> DatasetTensor<S> {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn window(&self, i: usize) -> &[S] {
        let w = self.t * self.c;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn one_hot(&self, i: usize) -> &[S] {
        let k = self.k();
        &self.labels[i * k..(i + 1) * k]
    }

    /// Class index of window `i` (position of the 1 in its one-hot row).
    pub fn label(&self, i: usize) -> usize {
        self.one_hot(i)
            .iter()
            .position(|&v| v == S::one())
            .expect("one-hot row has a 1")
    }

    pub fn label_indices(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.label(i)).collect()
    }

    /// A new tensor holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.t * self.c);
        let mut labels = Vec::with_capacity(rows.len() * self.k());
        let mut origins = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.window(r));
            labels.extend_from_slice(self.one_hot(r));
            origins.push(self.origins[r].clone());
        }
        Self {
            n: rows.len(),
            t: self.t,
            c: self.c,
            data,
            labels,
            class_names: self.class_names.clone(),
            origins,
        }
    }

    /// Converts the element type, e.g. for an `f64` gradient check.
    pub fn cast<U: Scalar>(&self) -> DatasetTensor<U> {
        let conv = |v: &S| U::from_f64_lossy(v.to_f64_lossy());
        DatasetTensor {
            n: self.n,
            t: self.t,
            c: self.c,
            data: self.data.iter().map(conv).collect(),
            labels: self.labels.iter().map(conv).collect(),
            class_names: self.class_names.clone(),
            origins: self.origins.clone(),
        }
    }
}

/// Stacks windows into a tensor and one-hot encodes `labels`.
pub fn assemble<S: Scalar>(
    windows: &[Window<S>],
    labels: &[usize],
    class_names: &[String],
) -> Result<DatasetTensor<S>, SeriesError> {
    let first = windows.first().ok_or(SeriesError::Empty)?;
    if labels.len() != windows.len() {
        return Err(SeriesError::LabelCount {
            windows: windows.len(),
            labels: labels.len(),
        });
    }
    let (t, c, k) = (first.len(), first.channels, class_names.len());
    let mut data = Vec::with_capacity(windows.len() * t * c);
    let mut one_hot = vec![S::zero(); windows.len() * k];
    for (i, (w, &label)) in windows.iter().zip(labels).enumerate() {
        if w.channels != c || w.len() != t || w.values.len() != t * c {
            return Err(SeriesError::ShapeMismatch {
                index: i,
                expected_t: t,
                expected_c: c,
                found_t: w.len(),
                found_c: w.channels,
            });
        }
        if label >= k {
            return Err(SeriesError::LabelOutOfRange { index: i, label, classes: k });
        }
        data.extend_from_slice(&w.values);
        one_hot[i * k + label] = S::one();
    }
    Ok(DatasetTensor {
        n: windows.len(),
        t,
        c,
        data,
        labels: one_hot,
        class_names: class_names.to_vec(),
        origins: windows.iter().map(|w| w.origin.clone()).collect(),
    })
}
