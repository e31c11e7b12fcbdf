use serde::{Deserialize, Serialize};

use super::ops::{self, BnCache, Geometry};
use super::params::{ConvBn, ModelParams, ResidualBlock};
use super::ModelError;
use crate::scalar::Scalar;
use crate::series::DatasetTensor;

/// Train mode normalises with batch statistics, eval mode with running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Softmax output for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub predicted_class: usize,
}

impl Prediction {
    fn from_probs(probs: Vec<f64>) -> Self {
        let predicted_class = argmax(&probs);
        Self { probs, predicted_class }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

struct LayerCache<S> {
    bn: Option<BnCache<S>>,
    /// Post-activation output (post-BN for the third layer and the shortcut).
    out: Vec<S>,
}

struct BlockCache<S> {
    layers: [LayerCache<S>; 3],
    shortcut: Option<LayerCache<S>>,
    out: Vec<S>,
}

/// Result of a forward pass. Train-mode passes keep the activations the
/// backward pass needs.
pub struct Forward<S> {
    geometry: Geometry,
    mode: Mode,
    input: Vec<S>,
    blocks: Vec<BlockCache<S>>,
    pooled: Vec<S>,
    /// `batch x K` logits.
    pub logits: Vec<S>,
    /// `batch x K` softmax probabilities.
    pub probs: Vec<S>,
}

impl<S: Scalar> Forward<S> {
    pub fn batch_size(&self) -> usize {
        self.geometry.b
    }

    pub fn predictions(&self) -> Vec<Prediction> {
        let k = self.probs.len() / self.geometry.b;
        self.probs
            .chunks_exact(k)
            .map(|row| Prediction::from_probs(row.iter().map(|p| p.to_f64_lossy()).collect()))
            .collect()
    }

    /// Output of each residual block, `filters x (batch * T)` channel-major.
    pub fn block_output(&self, block: usize) -> &[S] {
        &self.blocks[block].out
    }
}

/// Gradients of every trainable tensor, in [`ModelParams::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub tensors: Vec<Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }
}

/// Mean categorical cross-entropy with probabilities clamped to `1e-12`.
pub fn cross_entropy<S: Scalar>(probs: &[S], one_hot: &[S], k: usize) -> f64 {
    assert_eq!(probs.len(), one_hot.len(), "probability and label shapes differ");
    let b = probs.len() / k;
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(one_hot) {
        let y = y.to_f64_lossy();
        if y != 0.0 {
            total -= y * p.to_f64_lossy().max(1e-12).ln();
        }
    }
    total / b as f64
}

impl<S: Scalar> ModelParams<S> {
    fn geometry(&self, b: usize) -> Geometry {
        Geometry {
            b,
            t: self.config.input_len,
            padding: self.config.padding,
        }
    }

    /// Runs `b` windows (`b x T x C`, time-major as in [`DatasetTensor`]).
    /// Never modifies the parameters; see [`ModelParams::update_running_stats`].
    pub fn forward(&self, batch: &[S], b: usize, mode: Mode) -> Result<Forward<S>, ModelError> {
        let cfg = &self.config;
        let (t, c) = (cfg.input_len, cfg.channels);
        if b == 0 || batch.len() != b * t * c {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{b} x {t} x {c} values"),
                found: format!("{}", batch.len()),
            });
        }
        let g = self.geometry(b);
        let n = g.n();
        let mut input = vec![S::zero(); c * n];
        for (i, frame) in batch.chunks_exact(c).enumerate() {
            for (ch, &v) in frame.iter().enumerate() {
                input[ch * n + i] = v;
            }
        }

        let mut caches: Vec<BlockCache<S>> = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let x = caches.last().map_or(&input, |c| &c.out);
            let mut cache = block_forward(block, x, g, mode);
            if mode == Mode::Eval {
                // Only the block output feeds anything downstream.
                cache.layers.iter_mut().for_each(|l| l.out = Vec::new());
                cache.shortcut = None;
            }
            caches.push(cache);
        }

        let last = &caches.last().expect("three blocks").out;
        let f = self.dense.inputs;
        let inv_t = S::one() / S::from_usize_lossy(t);
        let mut pooled = vec![S::zero(); b * f];
        for ch in 0..f {
            for bi in 0..b {
                let mut acc = S::zero();
                for &v in &last[ch * n + bi * t..ch * n + (bi + 1) * t] {
                    acc += v;
                }
                pooled[bi * f + ch] = acc * inv_t;
            }
        }

        let k = self.dense.outputs;
        let mut logits = vec![S::zero(); b * k];
        for row in logits.chunks_exact_mut(k) {
            row.copy_from_slice(&self.dense.bias);
        }
        S::gemm(
            b,
            f,
            k,
            S::one(),
            (&pooled, f as isize, 1),
            (&self.dense.weight, 1, f as isize),
            S::one(),
            (&mut logits, k as isize, 1),
        );
        let probs = softmax_rows(&logits, k);

        Ok(Forward {
            geometry: g,
            mode,
            input,
            blocks: caches,
            pooled,
            logits,
            probs,
        })
    }

    /// Moves the BN running statistics toward the batch statistics of a
    /// train-mode pass.
    pub fn update_running_stats(&mut self, fwd: &Forward<S>) {
        assert_eq!(fwd.mode, Mode::Train, "running stats need a train-mode pass");
        let n = fwd.geometry.n();
        for (block, cache) in self.blocks.iter_mut().zip(&fwd.blocks) {
            let pairs = block.layers.iter_mut().zip(cache.layers.iter());
            let sc = block.shortcut.iter_mut().zip(cache.shortcut.iter());
            for (layer, lc) in pairs.chain(sc) {
                let bn = lc.bn.as_ref().expect("train-mode cache");
                ops::bn_update_running(&mut layer.bn.running_mean, &mut layer.bn.running_var, bn, n);
            }
        }
    }

    /// Exact gradients of the mean cross-entropy of a train-mode pass.
    pub fn backward(&self, fwd: &Forward<S>, one_hot: &[S]) -> Gradients<S> {
        assert_eq!(fwd.mode, Mode::Train, "backward needs a train-mode pass");
        let g = fwd.geometry;
        let (b, t, n) = (g.b, g.t, g.n());
        let k = self.dense.outputs;
        let f = self.dense.inputs;
        assert_eq!(one_hot.len(), b * k, "label shape");

        let inv_b = S::one() / S::from_usize_lossy(b);
        let dlogits: Vec<S> = fwd.probs.iter().zip(one_hot).map(|(&p, &y)| (p - y) * inv_b).collect();
        let mut dw_dense = vec![S::zero(); k * f];
        S::gemm(
            k,
            b,
            f,
            S::one(),
            (&dlogits, 1, k as isize),
            (&fwd.pooled, f as isize, 1),
            S::zero(),
            (&mut dw_dense, f as isize, 1),
        );
        let mut db_dense = vec![S::zero(); k];
        for row in dlogits.chunks_exact(k) {
            for (acc, &v) in db_dense.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dpooled = vec![S::zero(); b * f];
        S::gemm(
            b,
            k,
            f,
            S::one(),
            (&dlogits, k as isize, 1),
            (&self.dense.weight, f as isize, 1),
            S::zero(),
            (&mut dpooled, f as isize, 1),
        );
        let inv_t = S::one() / S::from_usize_lossy(t);
        let mut dout = vec![S::zero(); f * n];
        for ch in 0..f {
            for bi in 0..b {
                let v = dpooled[bi * f + ch] * inv_t;
                dout[ch * n + bi * t..ch * n + (bi + 1) * t].fill(v);
            }
        }

        let mut per_block: Vec<Vec<Vec<S>>> = vec![Vec::new(); self.blocks.len()];
        for i in (0..self.blocks.len()).rev() {
            let x = if i == 0 { &fwd.input } else { &fwd.blocks[i - 1].out };
            let (grads, dx) = block_backward(&self.blocks[i], &fwd.blocks[i], x, dout, g, i > 0);
            per_block[i] = grads;
            dout = dx.unwrap_or_default();
        }
        let mut tensors: Vec<Vec<S>> = per_block.into_iter().flatten().collect();
        tensors.push(dw_dense);
        tensors.push(db_dense);
        Gradients { tensors }
    }
}

fn softmax_rows<S: Scalar>(logits: &[S], k: usize) -> Vec<S> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn conv_bn_forward<S: Scalar>(layer: &ConvBn<S>, x: &[S], g: Geometry, mode: Mode, relu: bool) -> LayerCache<S> {
    let z = ops::conv_forward(&layer.conv, x, g);
    let bn = &layer.bn;
    let (mut out, cache) = match mode {
        Mode::Train => {
            let (y, c) = ops::bn_forward_train(&z, &bn.gamma, &bn.beta, g.n());
            (y, Some(c))
        }
        Mode::Eval => (
            ops::bn_forward_eval(&z, &bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var, g.n()),
            None,
        ),
    };
    if relu {
        ops::relu_inplace(&mut out);
    }
    LayerCache { bn: cache, out }
}

fn block_forward<S: Scalar>(block: &ResidualBlock<S>, x: &[S], g: Geometry, mode: Mode) -> BlockCache<S> {
    let [l1, l2, l3] = &block.layers;
    let c1 = conv_bn_forward(l1, x, g, mode, true);
    let c2 = conv_bn_forward(l2, &c1.out, g, mode, true);
    let c3 = conv_bn_forward(l3, &c2.out, g, mode, false);
    let shortcut = block.shortcut.as_ref().map(|sc| conv_bn_forward(sc, x, g, mode, false));
    let skip: &[S] = shortcut.as_ref().map_or(x, |s| &s.out);
    let mut out: Vec<S> = c3.out.iter().zip(skip).map(|(&a, &s)| a + s).collect();
    ops::relu_inplace(&mut out);
    BlockCache {
        layers: [c1, c2, c3],
        shortcut,
        out,
    }
}

/// Gradients `[weight, bias, gamma, beta]` of one conv/BN layer plus the
/// gradient with respect to its input.
fn conv_bn_backward<S: Scalar>(
    layer: &ConvBn<S>,
    cache: &LayerCache<S>,
    x: &[S],
    dy: &[S],
    g: Geometry,
    need_dx: bool,
) -> (Vec<Vec<S>>, Option<Vec<S>>) {
    let bn = cache.bn.as_ref().expect("train-mode cache");
    let (dz, dgamma, dbeta) = ops::bn_backward(dy, bn, &layer.bn.gamma, g.n());
    let (dw, db, dx) = ops::conv_backward(&layer.conv, x, &dz, g, need_dx);
    (vec![dw, db, dgamma, dbeta], dx)
}

fn block_backward<S: Scalar>(
    block: &ResidualBlock<S>,
    cache: &BlockCache<S>,
    x: &[S],
    mut dout: Vec<S>,
    g: Geometry,
    need_dx: bool,
) -> (Vec<Vec<S>>, Option<Vec<S>>) {
    let [l1, l2, l3] = &block.layers;
    let [c1, c2, c3] = &cache.layers;
    ops::relu_backward_inplace(&mut dout, &cache.out);

    let (g3, dh2) = conv_bn_backward(l3, c3, &c2.out, &dout, g, true);
    let mut dh2 = dh2.expect("requested");
    ops::relu_backward_inplace(&mut dh2, &c2.out);
    let (g2, dh1) = conv_bn_backward(l2, c2, &c1.out, &dh2, g, true);
    let mut dh1 = dh1.expect("requested");
    ops::relu_backward_inplace(&mut dh1, &c1.out);
    let (g1, dx_main) = conv_bn_backward(l1, c1, x, &dh1, g, need_dx);

    let mut grads = Vec::with_capacity(16);
    grads.extend(g1);
    grads.extend(g2);
    grads.extend(g3);
    let dx_skip = match (&block.shortcut, &cache.shortcut) {
        (Some(sc), Some(sc_cache)) => {
            let (gs, dxs) = conv_bn_backward(sc, sc_cache, x, &dout, g, need_dx);
            grads.extend(gs);
            dxs
        }
        _ => need_dx.then_some(dout),
    };
    let dx = match (dx_main, dx_skip) {
        (Some(mut a), Some(b)) => {
            for (v, w) in a.iter_mut().zip(&b) {
                *v += *w;
            }
            Some(a)
        }
        _ => None,
    };
    (grads, dx)
}

/// Eval-mode predictions for every window of `tensor`, `batch_size` windows at
/// a time.
pub fn predict<S: Scalar>(
    params: &ModelParams<S>,
    tensor: &DatasetTensor<S>,
    batch_size: usize,
) -> Result<Vec<Prediction>, ModelError> {
    let cfg = &params.config;
    if tensor.t != cfg.input_len || tensor.c != cfg.channels {
        return Err(ModelError::ShapeMismatch {
            expected: format!("windows of {} x {}", cfg.input_len, cfg.channels),
            found: format!("{} x {}", tensor.t, tensor.c),
        });
    }
    let per = tensor.t * tensor.c;
    let mut out = Vec::with_capacity(tensor.n);
    for chunk in tensor.data.chunks(per * batch_size.max(1)) {
        let fwd = params.forward(chunk, chunk.len() / per, Mode::Eval)?;
        out.extend(fwd.predictions());
    }
    Ok(out)
}
