//! Residual 1-D convolutional classifier for frame-size windows.
//!
//! Three residual blocks of conv/BN/ReLU layers, global average pooling and a
//! softmax head, trained with cross-entropy and Adam. Forward and backward
//! passes are written out by hand; convolutions run as im2col + GEMM.

mod checkpoint;
mod network;
mod ops;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use network::{cross_entropy, predict, Forward, Gradients, Mode, Prediction};
pub use params::{BatchNorm, Conv1d, ConvBn, Dense, ModelParams, ResidualBlock, TensorKind, TensorSpec};
pub use train::{evaluate_loss, train, Adam, EarlyStopping, EpochRecord, PlateauScheduler, TrainConfig, TrainOutcome};

/// Edge handling for the convolutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero "same" padding: `(k - 1) / 2` on the left, the rest on the right.
    #[default]
    Zero,
    /// Wrap around the window. Makes the pooled features shift invariant.
    Circular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_len: usize,
    pub channels: usize,
    pub num_classes: usize,
    #[serde(default = "default_filters")]
    pub block_filters: [usize; 3],
    #[serde(default = "default_kernels")]
    pub kernel_sizes: [usize; 3],
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub seed: u64,
}

fn default_filters() -> [usize; 3] {
    [256, 512, 512]
}

fn default_kernels() -> [usize; 3] {
    [8, 5, 3]
}

impl ModelConfig {
    /// Full-size network (256/512/512 filters, kernels 8/5/3).
    pub fn new(input_len: usize, channels: usize, num_classes: usize) -> Self {
        Self {
            input_len,
            channels,
            num_classes,
            block_filters: default_filters(),
            kernel_sizes: default_kernels(),
            padding: Padding::Zero,
            seed: 0,
        }
    }

    pub fn with_filters(mut self, filters: [usize; 3]) -> Self {
        self.block_filters = filters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.input_len == 0 || self.channels == 0 {
            return bad("input length and channel count must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.block_filters.contains(&0) {
            return bad(format!("block filters must be positive, got {:?}", self.block_filters));
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k == 0 || k > self.input_len) {
            return bad(format!("kernel size {k} outside 1..={}", self.input_len));
        }
        Ok(())
    }

    /// One-line shape summary used in error messages.
    pub fn shape_summary(&self) -> String {
        format!(
            "T={} C={} K={} filters={:?} kernels={:?}",
            self.input_len, self.channels, self.num_classes, self.block_filters, self.kernel_sizes
        )
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("dataset is empty: {0}")]
    EmptyDataset(&'static str),
    #[error("loss diverged at epoch {epoch}, batch {batch}: {detail}")]
    DivergedLoss { epoch: usize, batch: usize, detail: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
