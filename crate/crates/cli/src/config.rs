//! Run configuration. Loaded from TOML or JSON, then patched by command-line
//! flags; the resolved value is logged so a run can be repeated exactly.

use std::path::Path;

use anyhow::{bail, Context};
use bitcover_core::dataset::{Normalization, PRESET_NAMES};
use bitcover_core::dtw::{Cost, DtwConfig};
use bitcover_core::model::Padding;
use bitcover_core::series::WindowConfig;
use bitcover_core::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds generation, splits, initialisation and shuffling.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub synth: SynthSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub stats: StatsSection,
    pub dtw: DtwSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub presets: Vec<String>,
    pub clips: usize,
    pub frames: usize,
    /// Bits per frame for rate-controlled clips.
    pub target_bitrate: Option<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            presets: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            clips: 100,
            frames: 3000,
            target_bitrate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub window: usize,
    /// Defaults to the window length (no overlap).
    pub stride: Option<usize>,
    pub frame_type_channel: bool,
    pub normalization: Normalization,
    pub train_fraction: f64,
    /// Labels with fewer clips are rejected when loading a manifest.
    pub min_clips: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            window: 240,
            stride: None,
            frame_type_channel: false,
            normalization: Normalization::Zscore,
            train_fraction: 0.8,
            min_clips: None,
        }
    }
}

impl DatasetSection {
    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            len: self.window,
            stride: self.stride.unwrap_or(self.window),
            frame_type_channel: self.frame_type_channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub filters: [usize; 3],
    pub kernels: [usize; 3],
    pub padding: Padding,
}

impl Default for ModelSection {
    fn default() -> Self {
        let full = ModelConfig::new(1, 1, 2);
        Self {
            filters: full.block_filters,
            kernels: full.kernel_sizes,
            padding: full.padding,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, input_len: usize, channels: usize, classes: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            block_filters: self.filters,
            kernel_sizes: self.kernels,
            padding: self.padding,
            ..ModelConfig::new(input_len, channels, classes).with_seed(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub bins: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            bins: bitcover_core::stats::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwSection {
    pub k: usize,
    pub window_radius: Option<usize>,
    pub cost: Cost,
}

impl Default for DtwSection {
    fn default() -> Self {
        Self {
            k: 1,
            window_radius: None,
            cost: Cost::Abs,
        }
    }
}

impl DtwSection {
    pub fn dtw_config(&self) -> DtwConfig {
        DtwConfig {
            window_radius: self.window_radius,
            cost: self.cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub batch_size: usize,
    /// Frame rate used for the real-time factor.
    pub fps: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { batch_size: 4, fps: 30.0 }
    }
}

impl Config {
    /// Reads a `.toml` or `.json` file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("{}: config files must end in .toml or .json", path.display()),
        };
        Ok(cfg)
    }

    /// The training seed always follows the global one.
    pub fn resolve(mut self) -> Self {
        self.train.seed = self.seed;
        self
    }
}
