use bitcover_core::model::{
    cross_entropy, load_checkpoint, predict, save_checkpoint, train, Mode, ModelConfig, ModelParams, Padding,
    TensorKind, TrainConfig,
};
use bitcover_core::series::{DatasetTensor, WindowOrigin};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(k: usize, seed: u64) -> ModelConfig {
    ModelConfig::new(16, 1, k).with_filters([4, 8, 8]).with_seed(seed)
}

fn random_batch(b: usize, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b * len).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn one_hot(classes: &[usize], k: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        v[i * k + c] = 1.0;
    }
    v
}

/// Perturbs BN affine parameters and running statistics away from their
/// initial values so every code path carries signal.
fn jitter(p: &mut ModelParams<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.visit_mut(|spec, t| {
        for v in t.iter_mut() {
            match spec.kind {
                TensorKind::Gamma => *v = rng.random_range(0.5..1.5),
                TensorKind::Beta | TensorKind::Bias => *v = rng.random_range(-0.3..0.3),
                TensorKind::RunningMean => *v = rng.random_range(-0.5..0.5),
                TensorKind::RunningVar => *v = rng.random_range(0.5..2.0),
                TensorKind::Weight => {}
            }
        }
    });
}

fn train_loss(p: &ModelParams<f64>, x: &[f64], y: &[f64], b: usize) -> f64 {
    let fwd = p.forward(x, b, Mode::Train).unwrap();
    cross_entropy(&fwd.probs, y, p.config.num_classes)
}

/// Central differences for every trainable element, in trainable order.
fn numeric_gradients(p: &ModelParams<f64>, x: &[f64], y: &[f64], b: usize, h: f64) -> Vec<Vec<f64>> {
    let specs: Vec<_> = p.tensor_specs().into_iter().filter(|s| s.kind.trainable()).collect();
    let mut out = Vec::new();
    for (ti, spec) in specs.iter().enumerate() {
        let mut g = vec![0.0; spec.len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let mut q = p.clone();
                let mut seen = 0;
                q.visit_mut(|s, t| {
                    if s.kind.trainable() {
                        if seen == ti {
                            t[j] += delta;
                        }
                        seen += 1;
                    }
                });
                train_loss(&q, x, y, b)
            };
            *gj = (eval(h) - eval(-h)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn backward_matches_central_differences() {
    let b = 4;
    let mut p = ModelParams::<f64>::init(&tiny(3, 11));
    jitter(&mut p, 5);
    let x = random_batch(b, 16, 3);
    let y = one_hot(&[0, 1, 2, 1], 3);
    let fwd = p.forward(&x, b, Mode::Train).unwrap();
    let analytic = p.backward(&fwd, &y);
    let numeric = numeric_gradients(&p, &x, &y, b, 1e-4);
    let names: Vec<String> = p.tensor_specs().into_iter().filter(|s| s.kind.trainable()).map(|s| s.name).collect();
    assert_eq!(analytic.tensors.len(), numeric.len());
    for ((a, n), name) in analytic.tensors.iter().zip(&numeric).zip(&names) {
        let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
        // Conv biases feeding train-mode BN have an exactly zero gradient; the
        // floor keeps their finite-difference rounding noise (~1e-12) from
        // dividing by ~1e-17.
        let rel = norm(&diff) / norm(a).max(norm(n)).max(1e-8);
        assert!(rel < 1e-3, "{name}: relative error {rel:e}");
    }
}

#[test]
fn dense_bias_gradient_is_mean_residual() {
    let b = 5;
    let p = ModelParams::<f64>::init(&tiny(3, 2));
    let x = random_batch(b, 16, 9);
    let y = one_hot(&[2, 0, 1, 1, 0], 3);
    let fwd = p.forward(&x, b, Mode::Train).unwrap();
    let grads = p.backward(&fwd, &y);
    let db = grads.tensors.last().unwrap();
    for k in 0..3 {
        let mean: f64 = (0..b).map(|i| fwd.probs[i * 3 + k] - y[i * 3 + k]).sum::<f64>() / b as f64;
        assert!((db[k] - mean).abs() < 1e-12);
    }
}

#[test]
fn zeroed_head_blocks_all_upstream_gradient() {
    let b = 4;
    let mut p = ModelParams::<f64>::init(&tiny(2, 4));
    p.dense.weight.fill(0.0);
    let x = random_batch(b, 16, 1);
    let y = one_hot(&[0, 1, 0, 1], 2);
    let fwd = p.forward(&x, b, Mode::Train).unwrap();
    let grads = p.backward(&fwd, &y);
    let n = grads.tensors.len();
    for g in &grads.tensors[..n - 2] {
        assert!(g.iter().all(|&v| v == 0.0));
    }
    assert!(grads.tensors[n - 2].iter().any(|&v| v != 0.0));
}

// Plain loop reimplementation of the network, one window at a time in eval
// mode and over the whole batch in train mode.
mod reference {
    use super::*;

    pub type Maps = Vec<Vec<Vec<f64>>>; // [window][channel][time]

    fn conv(layer: &bitcover_core::model::Conv1d<f64>, x: &Maps, circular: bool) -> Maps {
        let t = x[0][0].len() as isize;
        let k = layer.kernel;
        let pl = ((k - 1) / 2) as isize;
        x.iter()
            .map(|win| {
                (0..layer.out_channels)
                    .map(|o| {
                        (0..t)
                            .map(|ti| {
                                let mut acc = layer.bias[o];
                                for c in 0..layer.in_channels {
                                    for j in 0..k {
                                        let mut s = ti + j as isize - pl;
                                        if circular {
                                            s = s.rem_euclid(t);
                                        } else if s < 0 || s >= t {
                                            continue;
                                        }
                                        acc += layer.weight[(o * layer.in_channels + c) * k + j] * win[c][s as usize];
                                    }
                                }
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn bn(layer: &bitcover_core::model::BatchNorm<f64>, x: &Maps, train: bool) -> Maps {
        let ch = layer.gamma.len();
        let mut out = x.clone();
        for c in 0..ch {
            let (mean, var) = if train {
                let vals: Vec<f64> = x.iter().flat_map(|w| w[c].iter().copied()).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                (m, vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64)
            } else {
                (layer.running_mean[c], layer.running_var[c])
            };
            for w in out.iter_mut() {
                for v in w[c].iter_mut() {
                    *v = layer.gamma[c] * (*v - mean) / (var + 1e-5).sqrt() + layer.beta[c];
                }
            }
        }
        out
    }

    fn relu(mut x: Maps) -> Maps {
        x.iter_mut().flatten().flatten().for_each(|v| *v = v.max(0.0));
        x
    }

    pub fn forward(p: &ModelParams<f64>, windows: &[Vec<f64>], train: bool) -> Vec<Vec<f64>> {
        let circular = p.config.padding == Padding::Circular;
        let mut h: Maps = windows.iter().map(|w| vec![w.clone()]).collect();
        for block in &p.blocks {
            let layer = |l: &bitcover_core::model::ConvBn<f64>, x: &Maps| bn(&l.bn, &conv(&l.conv, x, circular), train);
            let a = relu(layer(&block.layers[0], &h));
            let a = relu(layer(&block.layers[1], &a));
            let a = layer(&block.layers[2], &a);
            let s = match &block.shortcut {
                Some(sc) => layer(sc, &h),
                None => h.clone(),
            };
            let mut sum = a;
            for (wa, ws) in sum.iter_mut().zip(&s) {
                for (ca, cs) in wa.iter_mut().zip(ws) {
                    for (va, vs) in ca.iter_mut().zip(cs) {
                        *va += vs;
                    }
                }
            }
            h = relu(sum);
        }
        h.iter()
            .map(|win| {
                let pooled: Vec<f64> = win.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
                let d = &p.dense;
                let logits: Vec<f64> = (0..d.outputs)
                    .map(|k| d.bias[k] + (0..d.inputs).map(|f| d.weight[k * d.inputs + f] * pooled[f]).sum::<f64>())
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| v / z).collect()
            })
            .collect()
    }
}

#[test]
fn forward_matches_loop_reference() {
    let mut p = ModelParams::<f64>::init(&ModelConfig::new(16, 1, 2).with_filters([4, 8, 8]).with_seed(21));
    jitter(&mut p, 8);
    let b = 3;
    let x = random_batch(b, 16, 77);
    let windows: Vec<Vec<f64>> = x.chunks(16).map(|w| w.to_vec()).collect();
    for (mode, train) in [(Mode::Eval, false), (Mode::Train, true)] {
        let got = p.forward(&x, b, mode).unwrap().probs;
        let want: Vec<f64> = reference::forward(&p, &windows, train).into_iter().flatten().collect();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{mode:?}: {g} vs {w}");
        }
    }
}

#[test]
fn f32_forward_tracks_f64() {
    let p64 = ModelParams::<f64>::init(&tiny(3, 6));
    let p32 = p64.cast::<f32>();
    let x = random_batch(4, 16, 6);
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let a = p64.forward(&x, 4, Mode::Eval).unwrap().probs;
    let b = p32.forward(&x32, 4, Mode::Eval).unwrap().probs;
    for (u, v) in a.iter().zip(&b) {
        assert!((u - *v as f64).abs() < 1e-5);
    }
}

#[test]
fn zero_residual_branch_passes_shortcut_through() {
    let mut p = ModelParams::<f32>::init(&tiny(3, 13));
    for block in &mut p.blocks {
        for layer in &mut block.layers {
            layer.conv.weight.fill(0.0);
            layer.conv.bias.fill(0.0);
        }
    }
    let x: Vec<f32> = random_batch(2, 16, 4).into_iter().map(|v| v as f32).collect();
    let fwd = p.forward(&x, 2, Mode::Eval).unwrap();
    // block 2 has an identity shortcut: output = relu(input) = input (input is a ReLU output)
    let input = fwd.block_output(1);
    let output = fwd.block_output(2);
    assert_eq!(input.len(), output.len());
    for (a, b) in input.iter().zip(output) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn circular_padding_makes_logits_shift_invariant() {
    let mut cfg = tiny(3, 17);
    cfg.padding = Padding::Circular;
    let mut p = ModelParams::<f64>::init(&cfg);
    jitter(&mut p, 3);
    let x = random_batch(1, 16, 12);
    let base = p.forward(&x, 1, Mode::Eval).unwrap().logits;
    for shift in 1..16 {
        let mut shifted = x.clone();
        shifted.rotate_right(shift);
        let got = p.forward(&shifted, 1, Mode::Eval).unwrap().logits;
        for (a, b) in base.iter().zip(&got) {
            assert!((a - b).abs() < 1e-12, "shift {shift}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_dense_layer_gives_uniform_probabilities() {
    let mut p = ModelParams::<f64>::init(&tiny(4, 1));
    p.dense.weight.fill(0.0);
    let probs = p.forward(&random_batch(2, 16, 0), 2, Mode::Eval).unwrap().probs;
    assert!(probs.iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn cross_entropy_reference_values() {
    assert_eq!(cross_entropy(&[0.0, 1.0], &[0.0, 1.0], 2), 0.0);
    let uniform = cross_entropy(&[0.25; 4], &[0.0, 0.0, 1.0, 0.0], 4);
    assert!((uniform - 4f64.ln()).abs() < 1e-6);
    let wrong = cross_entropy(&[1.0, 0.0], &[0.0, 1.0], 2);
    assert!((wrong - 1e12f64.ln()).abs() < 1e-6);
    assert!((wrong - 27.631).abs() < 1e-3);
}

fn separable(n_per_class: usize, seed: u64) -> DatasetTensor<f32> {
    // class 0: rising ramps, class 1: falling ramps, both noisy
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = 16;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut origins = Vec::new();
    for i in 0..2 * n_per_class {
        let class = i % 2;
        for j in 0..t {
            let ramp = j as f32 / t as f32 - 0.5;
            let v = if class == 0 { ramp } else { -ramp };
            data.push(2.0 * v + rng.random_range(-0.3..0.3));
        }
        labels.extend(if class == 0 { [1.0, 0.0] } else { [0.0, 1.0] });
        origins.push(WindowOrigin {
            source_id: format!("clip{i}"),
            start_frame: 0,
        });
    }
    DatasetTensor {
        n: 2 * n_per_class,
        t,
        c: 1,
        data,
        labels,
        class_names: vec!["up".into(), "down".into()],
        origins,
    }
}

fn fixture_train() -> (bitcover_core::model::TrainOutcome<f32>, DatasetTensor<f32>) {
    let cfg = tiny(2, 1);
    let tc = TrainConfig {
        batch_size: 8,
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let (tr, va) = (separable(24, 1), separable(8, 2));
    (train(&cfg, &tc, &tr, &va).unwrap(), tr)
}

#[test]
fn separable_fixture_trains_to_perfect_validation() {
    let (out, tr) = fixture_train();
    assert!(out.history.len() <= 30);
    assert!(out.history.iter().any(|r| r.val_acc == 1.0), "{:?}", out.history.last());
    assert!(out.params.all_finite());

    let mut best = f64::INFINITY;
    let mut best_so_far = Vec::new();
    for r in &out.history {
        best = best.min(r.val_loss);
        best_so_far.push(best);
    }
    assert!(best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(out.best_val_loss, out.history[out.best_epoch].val_loss);

    // refeeding training windows returns their labels
    let preds = predict(&out.params, &tr, 16).unwrap();
    let correct = preds.iter().enumerate().filter(|(i, p)| tr.label(*i) == p.predicted_class).count();
    assert_eq!(correct, tr.n);
}

#[test]
fn training_is_reproducible() {
    let (a, _) = fixture_train();
    let (b, _) = fixture_train();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn batched_and_single_predictions_agree() {
    let p = ModelParams::<f32>::init(&tiny(2, 3));
    let data = separable(10, 5);
    let batched = predict(&p, &data, 20).unwrap();
    let single = predict(&p, &data, 1).unwrap();
    for (a, b) in batched.iter().zip(&single) {
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (out, tr) = fixture_train();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.bcmd");
    save_checkpoint(&out.params, &path).unwrap();
    let loaded: ModelParams<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(predict(&out.params, &tr, 8).unwrap(), predict(&loaded, &tr, 8).unwrap());
}

#[test]
fn wrong_window_shape_is_rejected() {
    let p = ModelParams::<f32>::init(&tiny(2, 0));
    assert!(p.forward(&[0.0; 15], 1, Mode::Eval).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut p = ModelParams::<f32>::init(&ModelConfig::new(8, 2, 3).with_filters([2, 3, 3]).with_seed(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        p.dense.bias.iter_mut().for_each(|b| *b = rng.random_range(-5.0..5.0));
        let x: Vec<f32> = (0..2 * 16).map(|_| (rng.random_range(-1.0..1.0) * scale) as f32).collect();
        let fwd = p.forward(&x, 2, Mode::Eval).unwrap();
        for row in fwd.probs.chunks(3) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
