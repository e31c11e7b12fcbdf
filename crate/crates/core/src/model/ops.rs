//! Layer kernels on channel-major activations: a tensor with `ch` channels
//! over a batch of `b` windows of length `t` is stored as `ch` rows of `b * t`
//! values, window by window.

use super::params::Conv1d;
use super::Padding;
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub b: usize,
    pub t: usize,
    pub padding: Padding,
}

impl Geometry {
    pub fn n(&self) -> usize {
        self.b * self.t
    }
}

fn left_pad(k: usize) -> usize {
    (k - 1) / 2
}

/// Unfolds `x` (`cin` rows) into `cin * k` rows where row `c * k + j` holds
/// input channel `c` shifted by `j - left_pad`.
pub fn im2col<S: Scalar>(x: &[S], cin: usize, k: usize, g: Geometry) -> Vec<S> {
    let (t, n) = (g.t, g.n());
    let pl = left_pad(k) as isize;
    let mut col = vec![S::zero(); cin * k * n];
    for c in 0..cin {
        for j in 0..k {
            let shift = j as isize - pl;
            let row = &mut col[(c * k + j) * n..(c * k + j + 1) * n];
            for bi in 0..g.b {
                let src = &x[c * n + bi * t..c * n + (bi + 1) * t];
                let dst = &mut row[bi * t..(bi + 1) * t];
                shift_copy(src, dst, shift, g.padding);
            }
        }
    }
    col
}

/// `dst[i] = src[i + shift]`, zero or wrapped outside the window.
fn shift_copy<S: Scalar>(src: &[S], dst: &mut [S], shift: isize, padding: Padding) {
    let t = src.len() as isize;
    let lo = (-shift).clamp(0, t) as usize;
    let hi = (t - shift).clamp(0, t) as usize;
    if lo < hi {
        let s0 = (lo as isize + shift) as usize;
        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
    }
    if padding == Padding::Circular {
        for i in (0..lo).chain(hi..t as usize) {
            dst[i] = src[(i as isize + shift).rem_euclid(t) as usize];
        }
    }
}

/// Inverse of [`im2col`]: accumulates `dcol` back onto `dx`.
pub fn col2im_add<S: Scalar>(dcol: &[S], dx: &mut [S], cin: usize, k: usize, g: Geometry) {
    let (t, n) = (g.t as isize, g.n());
    let pl = left_pad(k) as isize;
    for c in 0..cin {
        for j in 0..k {
            let shift = j as isize - pl;
            let row = &dcol[(c * k + j) * n..(c * k + j + 1) * n];
            for bi in 0..g.b {
                let base = c * n + bi * g.t;
                let src = &row[bi * g.t..(bi + 1) * g.t];
                for (i, &v) in src.iter().enumerate() {
                    let s = i as isize + shift;
                    let s = match g.padding {
                        Padding::Zero if s < 0 || s >= t => continue,
                        Padding::Zero => s,
                        Padding::Circular => s.rem_euclid(t),
                    };
                    dx[base + s as usize] += v;
                }
            }
        }
    }
}

/// `y = W * im2col(x) + bias`, `out_channels` rows.
pub fn conv_forward<S: Scalar>(conv: &Conv1d<S>, x: &[S], g: Geometry) -> Vec<S> {
    let n = g.n();
    let rows = conv.in_channels * conv.kernel;
    let mut y = vec![S::zero(); conv.out_channels * n];
    for (o, row) in y.chunks_exact_mut(n).enumerate() {
        row.fill(conv.bias[o]);
    }
    let owned;
    let col: &[S] = if conv.kernel == 1 {
        x
    } else {
        owned = im2col(x, conv.in_channels, conv.kernel, g);
        &owned
    };
    S::gemm(
        conv.out_channels,
        rows,
        n,
        S::one(),
        (&conv.weight, rows as isize, 1),
        (col, n as isize, 1),
        S::one(),
        (&mut y, n as isize, 1),
    );
    y
}

/// Gradients of a convolution given its input and output gradient. The input
/// gradient is skipped when `need_dx` is false.
pub fn conv_backward<S: Scalar>(
    conv: &Conv1d<S>,
    x: &[S],
    dy: &[S],
    g: Geometry,
    need_dx: bool,
) -> (Vec<S>, Vec<S>, Option<Vec<S>>) {
    let n = g.n();
    let rows = conv.in_channels * conv.kernel;
    let owned;
    let col: &[S] = if conv.kernel == 1 {
        x
    } else {
        owned = im2col(x, conv.in_channels, conv.kernel, g);
        &owned
    };
    let mut dw = vec![S::zero(); conv.weight.len()];
    // dW = dY * col^T
    S::gemm(
        conv.out_channels,
        n,
        rows,
        S::one(),
        (dy, n as isize, 1),
        (col, 1, n as isize),
        S::zero(),
        (&mut dw, rows as isize, 1),
    );
    let db = dy.chunks_exact(n).map(|r| sum(r)).collect();
    let dx = need_dx.then(|| {
        // dcol = W^T * dY
        let mut dcol = vec![S::zero(); rows * n];
        S::gemm(
            rows,
            conv.out_channels,
            n,
            S::one(),
            (&conv.weight, 1, rows as isize),
            (dy, n as isize, 1),
            S::zero(),
            (&mut dcol, n as isize, 1),
        );
        if conv.kernel == 1 {
            dcol
        } else {
            let mut dx = vec![S::zero(); x.len()];
            col2im_add(&dcol, &mut dx, conv.in_channels, conv.kernel, g);
            dx
        }
    });
    (dw, db, dx)
}

fn sum<S: Scalar>(v: &[S]) -> S {
    let mut acc = S::zero();
    for &x in v {
        acc += x;
    }
    acc
}

/// Batch statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

/// Normalises each channel with its batch mean and biased variance.
pub fn bn_forward_train<S: Scalar>(z: &[S], gamma: &[S], beta: &[S], n: usize) -> (Vec<S>, BnCache<S>) {
    let ch = gamma.len();
    let eps = S::from_f64_lossy(BN_EPS);
    let inv_n = S::one() / S::from_usize_lossy(n);
    let mut y = vec![S::zero(); z.len()];
    let mut cache = BnCache {
        xhat: vec![S::zero(); z.len()],
        inv_std: Vec::with_capacity(ch),
        mean: Vec::with_capacity(ch),
        var: Vec::with_capacity(ch),
    };
    for c in 0..ch {
        let row = &z[c * n..(c + 1) * n];
        let mean = sum(row) * inv_n;
        let mut var = S::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_n;
        let inv_std = S::one() / (var + eps).sqrt();
        let xh = &mut cache.xhat[c * n..(c + 1) * n];
        let out = &mut y[c * n..(c + 1) * n];
        for i in 0..n {
            xh[i] = (row[i] - mean) * inv_std;
            out[i] = gamma[c] * xh[i] + beta[c];
        }
        cache.inv_std.push(inv_std);
        cache.mean.push(mean);
        cache.var.push(var);
    }
    (y, cache)
}

/// Normalises with the running statistics.
pub fn bn_forward_eval<S: Scalar>(z: &[S], gamma: &[S], beta: &[S], mean: &[S], var: &[S], n: usize) -> Vec<S> {
    let eps = S::from_f64_lossy(BN_EPS);
    let mut y = vec![S::zero(); z.len()];
    for c in 0..gamma.len() {
        let scale = gamma[c] / (var[c] + eps).sqrt();
        let shift = beta[c] - mean[c] * scale;
        for (o, &v) in y[c * n..(c + 1) * n].iter_mut().zip(&z[c * n..(c + 1) * n]) {
            *o = v * scale + shift;
        }
    }
    y
}

/// Returns `(dz, dgamma, dbeta)`.
pub fn bn_backward<S: Scalar>(dy: &[S], cache: &BnCache<S>, gamma: &[S], n: usize) -> (Vec<S>, Vec<S>, Vec<S>) {
    let ch = gamma.len();
    let inv_n = S::one() / S::from_usize_lossy(n);
    let mut dz = vec![S::zero(); dy.len()];
    let mut dgamma = Vec::with_capacity(ch);
    let mut dbeta = Vec::with_capacity(ch);
    for c in 0..ch {
        let d = &dy[c * n..(c + 1) * n];
        let xh = &cache.xhat[c * n..(c + 1) * n];
        let mut sum_d = S::zero();
        let mut sum_dx = S::zero();
        for i in 0..n {
            sum_d += d[i];
            sum_dx += d[i] * xh[i];
        }
        dgamma.push(sum_dx);
        dbeta.push(sum_d);
        let k = gamma[c] * cache.inv_std[c] * inv_n;
        let nn = S::from_usize_lossy(n);
        for (i, out) in dz[c * n..(c + 1) * n].iter_mut().enumerate() {
            *out = k * (nn * d[i] - sum_d - xh[i] * sum_dx);
        }
    }
    (dz, dgamma, dbeta)
}

/// Running-statistics update from one training batch.
pub fn bn_update_running<S: Scalar>(running_mean: &mut [S], running_var: &mut [S], cache: &BnCache<S>, n: usize) {
    let m = S::from_f64_lossy(BN_MOMENTUM);
    let unbias = if n > 1 {
        S::from_usize_lossy(n) / S::from_usize_lossy(n - 1)
    } else {
        S::one()
    };
    for c in 0..running_mean.len() {
        running_mean[c] = m * running_mean[c] + (S::one() - m) * cache.mean[c];
        running_var[c] = m * running_var[c] + (S::one() - m) * cache.var[c] * unbias;
    }
}

pub fn relu_inplace<S: Scalar>(v: &mut [S]) {
    for x in v {
        if *x < S::zero() {
            *x = S::zero();
        }
    }
}

/// Zeroes `d` where the ReLU output was not positive.
pub fn relu_backward_inplace<S: Scalar>(d: &mut [S], out: &[S]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= S::zero() {
            *g = S::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(conv: &Conv1d<f64>, x: &[f64], g: Geometry) -> Vec<f64> {
        let (t, n) = (g.t, g.n());
        let pl = (conv.kernel - 1) / 2;
        let mut y = vec![0.0; conv.out_channels * n];
        for o in 0..conv.out_channels {
            for bi in 0..g.b {
                for ti in 0..t {
                    let mut acc = conv.bias[o];
                    for c in 0..conv.in_channels {
                        for j in 0..conv.kernel {
                            let s = ti as isize + j as isize - pl as isize;
                            let s = match g.padding {
                                Padding::Zero if s < 0 || s >= t as isize => continue,
                                Padding::Zero => s as usize,
                                Padding::Circular => s.rem_euclid(t as isize) as usize,
                            };
                            acc += conv.weight[(o * conv.in_channels + c) * conv.kernel + j] * x[c * n + bi * t + s];
                        }
                    }
                    y[o * n + bi * t + ti] = acc;
                }
            }
        }
        y
    }

    fn layer(cin: usize, cout: usize, k: usize) -> Conv1d<f64> {
        let len = cin * cout * k;
        Conv1d {
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            weight: (0..len).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect(),
            bias: (0..cout).map(|i| i as f64 * 0.25).collect(),
        }
    }

    #[test]
    fn conv_matches_loops() {
        for padding in [Padding::Zero, Padding::Circular] {
            for k in [1, 2, 3, 5, 8] {
                let g = Geometry { b: 3, t: 9, padding };
                let conv = layer(2, 4, k);
                let x: Vec<f64> = (0..2 * g.n()).map(|i| ((i * 13 % 17) as f64 - 8.0) / 3.0).collect();
                let got = conv_forward(&conv, &x, g);
                let want = naive_conv(&conv, &x, g);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "k={k} {padding:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn even_kernel_pads_more_on_the_right() {
        // k=2: left pad 0, right pad 1, so y[t] = w0 x[t] + w1 x[t+1]
        let conv = Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 2,
            weight: vec![1.0, 10.0],
            bias: vec![0.0],
        };
        let g = Geometry { b: 1, t: 3, padding: Padding::Zero };
        assert_eq!(conv_forward(&conv, &[1.0, 2.0, 3.0], g), vec![21.0, 32.0, 3.0]);
    }

    #[test]
    fn conv_input_gradient_is_adjoint() {
        // <conv(x) - b, dy> == <x, dx(dy)>
        for padding in [Padding::Zero, Padding::Circular] {
            let g = Geometry { b: 2, t: 7, padding };
            let mut conv = layer(3, 2, 5);
            conv.bias.fill(0.0);
            let x: Vec<f64> = (0..3 * g.n()).map(|i| (i as f64 * 0.37).sin()).collect();
            let dy: Vec<f64> = (0..2 * g.n()).map(|i| (i as f64 * 0.91).cos()).collect();
            let y = conv_forward(&conv, &x, g);
            let (_, _, dx) = conv_backward(&conv, &x, &dy, g, true);
            let lhs: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(dx.unwrap().iter()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn batch_norm_output_is_standardised() {
        let n = 50;
        let z: Vec<f64> = (0..2 * n).map(|i| (i as f64).powf(1.3)).collect();
        let (y, cache) = bn_forward_train(&z, &[1.0, 2.0], &[0.0, 1.0], n);
        for c in 0..2 {
            let row = &y[c * n..(c + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let (g, b) = ([1.0, 2.0][c], [0.0, 1.0][c]);
            assert!((mean - b).abs() < 1e-9);
            assert!((var - g * g * cache.var[c] / (cache.var[c] + BN_EPS)).abs() < 1e-9);
        }
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let z = [1.0, 3.0];
        let (_, cache) = bn_forward_train(&z, &[1.0], &[0.0], 2);
        let (mut m, mut v) = ([0.0f64], [1.0f64]);
        bn_update_running(&mut m, &mut v, &cache, 2);
        assert!((m[0] - 0.2).abs() < 1e-12);
        // batch var 1, unbiased 2
        assert!((v[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }
}
