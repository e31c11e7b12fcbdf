//! Video classification from compressed frame sizes.
//!
//! Extracts per-frame coded sizes from H.264 Annex B streams without decoding,
//! turns them into windows and classifies them with a residual 1-D CNN, a DTW
//! nearest-neighbour baseline or histogram divergences.

pub mod bitstream;
pub mod dataset;
pub mod dtw;
pub mod model;
pub mod scalar;
pub mod series;
pub mod stats;

pub use bitstream::{extract_frame_sizes, FrameSizeSeries, FrameType};
pub use model::{ModelConfig, TrainConfig};

/// Single-precision network parameters, used for training and inference.
pub type ModelParams32 = model::ModelParams<f32>;
/// Double-precision network parameters, used for gradient checks.
pub type ModelParams64 = model::ModelParams<f64>;
pub type Tensor32 = series::DatasetTensor<f32>;
pub type Tensor64 = series::DatasetTensor<f64>;
pub type Window32 = series::Window<f32>;
