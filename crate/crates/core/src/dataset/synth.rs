//! Synthetic frame-size series with GOP structure, scene cuts and optional
//! constant-bitrate rate control.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::bitstream::{FrameSizeSeries, FrameType};

/// Codec behaviour under a bitrate target. Every frame costs at least
/// `floor_bits` (headers, skip flags) regardless of the target, and residual
/// detail below `deadzone_bits` is quantised away. Both are absolute, so the
/// shape of the series depends on how the target compares to them.
///
/// Content bits follow `demand * s^gamma`, where `s` is a shared quality
/// scale (1 = the unconstrained encode) and `gamma` is 1 for I frames and
/// `p_exponent` / `b_exponent` for predicted frames: inter residuals vanish
/// faster under coarse quantisation, so the I/P ratio grows as the target
/// drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateControl {
    /// Frames in the trailing demand window the scale is solved over.
    pub window: usize,
    pub floor_bits: f64,
    /// Spread of the per-frame overhead.
    pub floor_cv: f64,
    pub deadzone_bits: f64,
    /// Bucket capacity in frames at the target rate.
    pub buffer_frames: f64,
    pub p_exponent: f64,
    pub b_exponent: f64,
}

impl Default for RateControl {
    fn default() -> Self {
        Self {
            window: 30,
            floor_bits: 2400.0,
            floor_cv: 0.15,
            deadzone_bits: 600.0,
            buffer_frames: 8.0,
            p_exponent: 1.5,
            b_exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassSpec {
    pub gop_period: usize,
    pub i_frame_mean_bits: f64,
    pub p_frame_mean_bits: f64,
    pub b_frame_mean_bits: f64,
    pub noise_cv: f64,
    /// Per-frame probability of a cut after the frame.
    pub scene_change_rate: f64,
    pub scene_change_boost: f64,
    pub b_frames_enabled: bool,
    #[serde(default)]
    pub target_bitrate_bits_per_frame: Option<f64>,
    /// Spread of the per-scene complexity multiplier (mean 1).
    #[serde(default)]
    pub scene_complexity_cv: f64,
    #[serde(default)]
    pub rate_control: RateControl,
    #[serde(default)]
    pub seed: u64,
}

pub const PRESET_NAMES: [&str; 4] = ["sports", "concert", "vlog", "gaming"];

impl SyntheticClassSpec {
    /// Built-in class families: `sports` (short GOP, frequent cuts, busy
    /// motion), `concert` (long stable GOP, low variance), `vlog` (medium
    /// churn), `gaming` (very long GOP, flat screen-capture sizes).
    pub fn preset(name: &str) -> Option<Self> {
        let base = |gop, i, p, b, cv, cut, boost, bf, scv| Self {
            gop_period: gop,
            i_frame_mean_bits: i,
            p_frame_mean_bits: p,
            b_frame_mean_bits: b,
            noise_cv: cv,
            scene_change_rate: cut,
            scene_change_boost: boost,
            b_frames_enabled: bf,
            target_bitrate_bits_per_frame: None,
            scene_complexity_cv: scv,
            rate_control: RateControl::default(),
            seed: 0,
        };
        Some(match name {
            "sports" => base(30, 46_000.0, 25_300.0, 18_400.0, 0.30, 1.0 / 80.0, 1.5, true, 0.30),
            "concert" => base(60, 33_000.0, 13_200.0, 9_900.0, 0.18, 1.0 / 300.0, 1.4, true, 0.15),
            "vlog" => base(45, 14_400.0, 6_300.0, 4_500.0, 0.30, 1.0 / 150.0, 1.5, false, 0.25),
            "gaming" => base(90, 9_600.0, 3_200.0, 2_400.0, 0.14, 1.0 / 600.0, 1.3, false, 0.12),
            _ => return None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target_bitrate(mut self, bits_per_frame: Option<f64>) -> Self {
        self.target_bitrate_bits_per_frame = bits_per_frame;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidSpec(m));
        if self.gop_period == 0 {
            return bad("gop_period must be at least 1".into());
        }
        let means = [self.i_frame_mean_bits, self.p_frame_mean_bits, self.b_frame_mean_bits];
        if means.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return bad(format!("frame means must be positive, got {means:?}"));
        }
        if !(0.0..=1.0).contains(&self.scene_change_rate) {
            return bad(format!("scene_change_rate {} outside [0, 1]", self.scene_change_rate));
        }
        if self.noise_cv < 0.0 || self.scene_complexity_cv < 0.0 || self.rate_control.floor_cv < 0.0 {
            return bad("coefficients of variation must be non-negative".into());
        }
        if !(self.scene_change_boost > 0.0) {
            return bad("scene_change_boost must be positive".into());
        }
        if let Some(t) = self.target_bitrate_bits_per_frame {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("target bitrate must be positive, got {t}"));
            }
            if self.rate_control.window == 0 {
                return bad("rate control window must be at least 1".into());
            }
            if !(self.rate_control.p_exponent > 0.0 && self.rate_control.b_exponent > 0.0) {
                return bad("rate control exponents must be positive".into());
            }
        }
        Ok(())
    }

    fn frame_type(&self, i: usize) -> FrameType {
        let j = i % self.gop_period;
        if j == 0 {
            FrameType::I
        } else if self.b_frames_enabled && j % 3 != 0 {
            FrameType::B
        } else {
            FrameType::P
        }
    }

    fn mean_bits(&self, t: FrameType) -> f64 {
        match t {
            FrameType::I => self.i_frame_mean_bits,
            FrameType::B => self.b_frame_mean_bits,
            _ => self.p_frame_mean_bits,
        }
    }
}

/// Mean-one lognormal multiplier with coefficient of variation `cv`.
struct UnitLogNormal(Option<LogNormal<f64>>);

impl UnitLogNormal {
    fn new(cv: f64) -> Self {
        if cv == 0.0 {
            return Self(None);
        }
        let s2 = (1.0 + cv * cv).ln();
        Self(Some(LogNormal::new(-s2 / 2.0, s2.sqrt()).expect("finite parameters")))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.0.as_ref().map_or(1.0, |d| d.sample(rng))
    }
}

/// Generates `num_frames` frame sizes (bits, whole bytes) for one clip.
pub fn generate_synthetic(spec: &SyntheticClassSpec, num_frames: usize) -> Result<FrameSizeSeries, DatasetError> {
    spec.validate()?;
    if num_frames == 0 {
        return Err(DatasetError::InvalidSpec("num_frames must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = UnitLogNormal::new(spec.noise_cv);
    let scene = UnitLogNormal::new(spec.scene_complexity_cv);

    let mut complexity = scene.sample(&mut rng);
    let mut cut_pending = false;
    let mut demand = Vec::with_capacity(num_frames);
    let mut types = Vec::with_capacity(num_frames);
    for i in 0..num_frames {
        let cut = std::mem::take(&mut cut_pending);
        if cut {
            complexity = scene.sample(&mut rng);
        }
        let t = if cut { FrameType::I } else { spec.frame_type(i) };
        let boost = if cut { spec.scene_change_boost } else { 1.0 };
        demand.push(spec.mean_bits(t) * complexity * boost * noise.sample(&mut rng));
        types.push(t);
        cut_pending = rng.random::<f64>() < spec.scene_change_rate;
    }

    let sizes = match spec.target_bitrate_bits_per_frame {
        None => demand,
        Some(target) => rate_control(&demand, &types, target, &spec.rate_control, &mut rng),
    };
    let values = sizes.iter().map(|&s| (s / 8.0).ceil().max(1.0) as u64 * 8).collect();
    Ok(FrameSizeSeries::new(format!("synthetic-{}", spec.seed), values, types))
}

/// Leaky-bucket CBR emulation. For each frame the quality scale is solved so
/// that the trailing window's demand fits the per-frame content budget; the
/// frame then gets the overhead floor plus its scaled content, and frames that
/// would overflow the bucket are squeezed.
fn rate_control(
    demand: &[f64],
    types: &[FrameType],
    target: f64,
    rc: &RateControl,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let floor_noise = UnitLogNormal::new(rc.floor_cv);
    let budget = (target - rc.floor_bits).max(0.0);
    let capacity = rc.buffer_frames * target;
    let exponent = |t: FrameType| match t {
        FrameType::I => 1.0,
        FrameType::B => rc.b_exponent,
        _ => rc.p_exponent,
    };
    // trailing demand summed per exponent class (I, P, B)
    let slot = |t: FrameType| match t {
        FrameType::I => 0,
        FrameType::B => 2,
        _ => 1,
    };
    let gammas = [1.0, rc.p_exponent, rc.b_exponent];
    let mut sums = [0.0f64; 3];
    let mut trailing = VecDeque::with_capacity(rc.window);
    let mut fullness = 0.0;
    demand
        .iter()
        .zip(types)
        .map(|(&d, &t)| {
            if trailing.len() == rc.window {
                let (old_d, old_slot): (f64, usize) = trailing.pop_front().unwrap_or((0.0, 0));
                sums[old_slot] -= old_d;
            }
            trailing.push_back((d, slot(t)));
            sums[slot(t)] += d;
            let scale = solve_scale(&sums, &gammas, budget * trailing.len() as f64);
            let floor = rc.floor_bits * floor_noise.sample(rng);
            let mut content = (d * scale.powf(exponent(t)) - rc.deadzone_bits).max(0.0);
            fullness += floor + content - target;
            if fullness > capacity {
                let squeeze = (fullness - capacity).min(content);
                content -= squeeze;
                fullness -= squeeze;
            }
            fullness = fullness.max(0.0);
            floor + content
        })
        .collect()
}

/// Solves `sum_k a_k s^g_k = total` for `s > 0` (the left side is increasing
/// in `s`) by Newton's method in `ln s`.
fn solve_scale(a: &[f64; 3], g: &[f64; 3], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    if a.iter().all(|&v| v <= 0.0) {
        return 1.0;
    }
    let mut x = 0.0f64;
    for _ in 0..50 {
        let (mut f, mut df) = (0.0, 0.0);
        for k in 0..3 {
            if a[k] > 0.0 {
                let term = a[k] * (g[k] * x).exp();
                f += term;
                df += g[k] * term;
            }
        }
        let step = (f.ln() - total.ln()) * f / df;
        x -= step.clamp(-2.0, 2.0);
        if step.abs() < 1e-12 {
            break;
        }
    }
    x.exp()
}

/// Derives independent per-clip seeds from one base seed. The base is hashed
/// before the clip identity is mixed in, so nearby base seeds do not share
/// clips.
pub fn clip_seed(base: u64, class: usize, clip: usize) -> u64 {
    splitmix64(splitmix64(base) ^ ((class as u64) << 32 | clip as u64))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `clips_per_class` labelled clips for each `(name, spec)`, in class order.
/// Clip `j` of class `name` has source id `name-000j`.
pub fn generate_suite(
    classes: &[(String, SyntheticClassSpec)],
    clips_per_class: usize,
    num_frames: usize,
    seed: u64,
) -> Result<Vec<FrameSizeSeries>, DatasetError> {
    let jobs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|c| (0..clips_per_class).map(move |j| (c, j)))
        .collect();
    jobs.par_iter()
        .map(|&(c, j)| {
            let (name, spec) = &classes[c];
            let spec = spec.clone().with_seed(clip_seed(seed, c, j));
            let mut series = generate_synthetic(&spec, num_frames)?;
            series.source_id = format!("{name}-{j:04}");
            series.label = Some(name.clone());
            Ok(series)
        })
        .collect()
}

/// The four presets under their own names.
pub fn preset_classes() -> Vec<(String, SyntheticClassSpec)> {
    PRESET_NAMES
        .iter()
        .map(|n| (n.to_string(), SyntheticClassSpec::preset(n).expect("known preset")))
        .collect()
}
