use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::scalar::Scalar;

/// 1-D convolution with `out x in x kernel` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<S> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Conv1d<S> {
    fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![S::zero(); out_channels * in_channels * kernel],
            bias: vec![S::zero(); out_channels],
        }
    }

    /// He-uniform weights: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    fn he_uniform(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel);
        let limit = (6.0 / (in_channels * kernel) as f64).sqrt();
        for w in &mut layer.weight {
            *w = S::from_f64_lossy(rng.random_range(-limit..limit));
        }
        layer
    }
}

/// Batch normalisation over the channel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
        }
    }
}

/// conv, BN and (except for the last) ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<S> {
    pub conv: Conv1d<S>,
    pub bn: BatchNorm<S>,
}

/// Three conv/BN layers plus a shortcut. The shortcut is a 1x1 conv + BN when
/// the channel count changes and the identity otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<S> {
    pub layers: [ConvBn<S>; 3],
    pub shortcut: Option<ConvBn<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`.
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

/// Every weight, bias and normalisation statistic of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub blocks: Vec<ResidualBlock<S>>,
    pub dense: Dense<S>,
}

/// What a tensor in [`ModelParams`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl TensorKind {
    pub fn trainable(self) -> bool {
        !matches!(self, TensorKind::RunningMean | TensorKind::RunningVar)
    }
}

/// Name, kind and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: Scalar> ModelParams<S> {
    /// Architecture with every weight zero and BN at identity.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut blocks = Vec::with_capacity(3);
        let mut in_ch = config.channels;
        for &out_ch in &config.block_filters {
            let layer = |cin: usize, k: usize| ConvBn {
                conv: Conv1d::zeros(cin, out_ch, k),
                bn: BatchNorm::identity(out_ch),
            };
            let ks = config.kernel_sizes;
            blocks.push(ResidualBlock {
                layers: [layer(in_ch, ks[0]), layer(out_ch, ks[1]), layer(out_ch, ks[2])],
                shortcut: (in_ch != out_ch).then(|| layer(in_ch, 1)),
            });
            in_ch = out_ch;
        }
        let dense = Dense {
            inputs: in_ch,
            outputs: config.num_classes,
            weight: vec![S::zero(); config.num_classes * in_ch],
            bias: vec![S::zero(); config.num_classes],
        };
        Self {
            config: config.clone(),
            blocks,
            dense,
        }
    }

    /// Seeded initialisation: He-uniform conv weights, Glorot-uniform dense
    /// weights, zero biases, BN at identity. Equal seeds give bit-identical
    /// parameters.
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Self::zeros(config);
        for block in &mut params.blocks {
            for layer in block.layers.iter_mut().chain(block.shortcut.as_mut()) {
                let c = &layer.conv;
                layer.conv = Conv1d::he_uniform(c.in_channels, c.out_channels, c.kernel, &mut rng);
            }
        }
        let d = &mut params.dense;
        let limit = (6.0 / (d.inputs + d.outputs) as f64).sqrt();
        for w in &mut d.weight {
            *w = S::from_f64_lossy(rng.random_range(-limit..limit));
        }
        params
    }

    /// Visits every tensor in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&TensorSpec, &[S])) {
        for (spec, idx) in self.layout() {
            f(&spec, self.tensor(idx));
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&TensorSpec, &mut Vec<S>)) {
        for (spec, idx) in self.layout() {
            f(&spec, self.tensor_mut(idx));
        }
    }

    /// Names, kinds and shapes of all tensors, in visiting order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        self.layout().into_iter().map(|(s, _)| s).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.tensor_specs().iter().filter(|s| s.kind.trainable()).map(TensorSpec::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    fn layout(&self) -> Vec<(TensorSpec, TensorIndex)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let names = ["conv1", "conv2", "conv3"];
            let mut layers: Vec<(String, &ConvBn<S>, Slot)> = block
                .layers
                .iter()
                .enumerate()
                .map(|(l, layer)| (format!("block{b}.{}", names[l]), layer, Slot::Layer(l)))
                .collect();
            if let Some(sc) = &block.shortcut {
                layers.push((format!("block{b}.shortcut"), sc, Slot::Shortcut));
            }
            for (prefix, layer, slot) in layers {
                let c = &layer.conv;
                let ch = c.out_channels;
                let entries = [
                    ("weight", TensorKind::Weight, vec![ch, c.in_channels, c.kernel]),
                    ("bias", TensorKind::Bias, vec![ch]),
                    ("bn.gamma", TensorKind::Gamma, vec![ch]),
                    ("bn.beta", TensorKind::Beta, vec![ch]),
                    ("bn.running_mean", TensorKind::RunningMean, vec![ch]),
                    ("bn.running_var", TensorKind::RunningVar, vec![ch]),
                ];
                for (suffix, kind, shape) in entries {
                    out.push((
                        TensorSpec {
                            name: format!("{prefix}.{suffix}"),
                            kind,
                            shape,
                        },
                        TensorIndex::Block(b, slot, kind),
                    ));
                }
            }
        }
        let d = &self.dense;
        out.push((
            TensorSpec {
                name: "dense.weight".into(),
                kind: TensorKind::Weight,
                shape: vec![d.outputs, d.inputs],
            },
            TensorIndex::DenseWeight,
        ));
        out.push((
            TensorSpec {
                name: "dense.bias".into(),
                kind: TensorKind::Bias,
                shape: vec![d.outputs],
            },
            TensorIndex::DenseBias,
        ));
        out
    }

    fn tensor(&self, idx: TensorIndex) -> &Vec<S> {
        match idx {
            TensorIndex::DenseWeight => &self.dense.weight,
            TensorIndex::DenseBias => &self.dense.bias,
            TensorIndex::Block(b, slot, kind) => {
                let block = &self.blocks[b];
                let layer = match slot {
                    Slot::Layer(l) => &block.layers[l],
                    Slot::Shortcut => block.shortcut.as_ref().expect("layout lists existing shortcuts"),
                };
                match kind {
                    TensorKind::Weight => &layer.conv.weight,
                    TensorKind::Bias => &layer.conv.bias,
                    TensorKind::Gamma => &layer.bn.gamma,
                    TensorKind::Beta => &layer.bn.beta,
                    TensorKind::RunningMean => &layer.bn.running_mean,
                    TensorKind::RunningVar => &layer.bn.running_var,
                }
            }
        }
    }

    fn tensor_mut(&mut self, idx: TensorIndex) -> &mut Vec<S> {
        match idx {
            TensorIndex::DenseWeight => &mut self.dense.weight,
            TensorIndex::DenseBias => &mut self.dense.bias,
            TensorIndex::Block(b, slot, kind) => {
                let block = &mut self.blocks[b];
                let layer = match slot {
                    Slot::Layer(l) => &mut block.layers[l],
                    Slot::Shortcut => block.shortcut.as_mut().expect("layout lists existing shortcuts"),
                };
                match kind {
                    TensorKind::Weight => &mut layer.conv.weight,
                    TensorKind::Bias => &mut layer.conv.bias,
                    TensorKind::Gamma => &mut layer.bn.gamma,
                    TensorKind::Beta => &mut layer.bn.beta,
                    TensorKind::RunningMean => &mut layer.bn.running_mean,
                    TensorKind::RunningVar => &mut layer.bn.running_var,
                }
            }
        }
    }

    /// Trainable tensors flattened in visiting order.
    pub fn trainable(&self) -> Vec<&[S]> {
        let mut out = Vec::new();
        for (spec, idx) in self.layout() {
            if spec.kind.trainable() {
                out.push(self.tensor(idx).as_slice());
            }
        }
        out
    }

    /// Converts the element type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        let mut src = Vec::new();
        self.visit(|_, t| src.push(t.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect::<Vec<U>>()));
        let mut it = src.into_iter();
        out.visit_mut(|_, t| *t = it.next().expect("same layout"));
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Layer(usize),
    Shortcut,
}

#[derive(Debug, Clone, Copy)]
enum TensorIndex {
    Block(usize, Slot, TensorKind),
    DenseWeight,
    DenseBias,
}
