use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{cross_entropy, Gradients, Mode};
use super::{ModelConfig, ModelError, ModelParams};
use crate::scalar::Scalar;
use crate::series::DatasetTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_reduce_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub min_lr: f64,
    /// Validation loss must drop by more than this to count as improvement.
    pub min_delta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            lr_reduce_factor: 0.5,
            lr_patience: 40,
            early_stop_patience: 80,
            min_lr: 1e-4,
            min_delta: 1e-4,
            batch_size: 16,
            max_epochs: 1500,
            validation_fraction: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(self.lr_reduce_factor > 0.0 && self.lr_reduce_factor < 1.0) {
            return bad("lr_reduce_factor must be in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.initial_lr > 0.0) || self.min_lr < 0.0 {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ModelParams<S>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<S>> = params.trainable().iter().map(|t| vec![S::zero(); t.len()]).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams<S>, grads: &Gradients<S>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (S::from_f64_lossy(self.beta1), S::from_f64_lossy(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        // lr * m_hat / (sqrt(v_hat) + eps) == step_size * m / (sqrt(v) + eps_hat)
        let step_size = S::from_f64_lossy(lr * c2.sqrt() / c1);
        let eps = S::from_f64_lossy(self.epsilon * c2.sqrt());
        let mut i = 0;
        params.visit_mut(|spec, t| {
            if !spec.kind.trainable() {
                return;
            }
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.tensors[i]);
            for j in 0..t.len() {
                m[j] = b1 * m[j] + (S::one() - b1) * g[j];
                v[j] = b2 * v[j] + (S::one() - b2) * g[j] * g[j];
                t[j] -= step_size * m[j] / (v[j].sqrt() + eps);
            }
            i += 1;
        });
    }
}

/// Halves (by `factor`) the learning rate after `patience` epochs without
/// improvement, never going below `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub min_delta: f64,
    lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, factor: f64, patience: usize, min_lr: f64, min_delta: f64) -> Self {
        Self {
            factor,
            patience,
            min_lr,
            min_delta,
            lr: initial_lr,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss and returns the learning rate for
    /// the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams<S>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Validation loss and accuracy in eval mode.
pub fn evaluate_loss<S: Scalar>(
    params: &ModelParams<S>,
    data: &DatasetTensor<S>,
    batch_size: usize,
) -> Result<(f64, f64), ModelError> {
    let per = data.t * data.c;
    let k = data.k();
    let (mut loss, mut correct) = (0.0, 0usize);
    for (chunk, labels) in data.data.chunks(per * batch_size).zip(data.labels.chunks(k * batch_size)) {
        let b = chunk.len() / per;
        let fwd = params.forward(chunk, b, Mode::Eval)?;
        loss += cross_entropy(&fwd.probs, labels, k) * b as f64;
        for (pred, y) in fwd.predictions().iter().zip(labels.chunks_exact(k)) {
            correct += usize::from(y[pred.predicted_class] > S::zero());
        }
    }
    Ok((loss / data.n as f64, correct as f64 / data.n as f64))
}

/// Minibatch Adam training with learning-rate reduction on plateau, early
/// stopping and best-epoch restore. Deterministic for fixed seeds.
pub fn train<S: Scalar>(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &DatasetTensor<S>,
    val_set: &DatasetTensor<S>,
) -> Result<TrainOutcome<S>, ModelError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if train_set.n == 0 {
        return Err(ModelError::EmptyDataset("training set"));
    }
    if val_set.n == 0 {
        return Err(ModelError::EmptyDataset("validation set"));
    }
    for set in [train_set, val_set] {
        if set.t != model_cfg.input_len || set.c != model_cfg.channels || set.k() != model_cfg.num_classes {
            return Err(ModelError::ShapeMismatch {
                expected: model_cfg.shape_summary(),
                found: format!("T={} C={} K={}", set.t, set.c, set.k()),
            });
        }
    }

    let mut params = ModelParams::<S>::init(model_cfg);
    let mut adam = Adam::new(&params, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon);
    let mut sched = PlateauScheduler::new(
        train_cfg.initial_lr,
        train_cfg.lr_reduce_factor,
        train_cfg.lr_patience,
        train_cfg.min_lr,
        train_cfg.min_delta,
    );
    let mut stopper = EarlyStopping::new(train_cfg.early_stop_patience, train_cfg.min_delta);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);

    let per = train_set.t * train_set.c;
    let k = train_set.k();
    let mut order: Vec<usize> = (0..train_set.n).collect();
    let mut history = Vec::new();
    let mut best = (params.clone(), 0usize, f64::INFINITY);
    let mut stopped_early = false;
    let mut batch = Vec::with_capacity(per * train_cfg.batch_size);
    let mut labels = Vec::with_capacity(k * train_cfg.batch_size);

    for epoch in 0..train_cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(train_cfg.batch_size).enumerate() {
            batch.clear();
            labels.clear();
            for &i in idx {
                batch.extend_from_slice(train_set.window(i));
                labels.extend_from_slice(train_set.one_hot(i));
            }
            let fwd = params.forward(&batch, idx.len(), Mode::Train)?;
            let loss = cross_entropy(&fwd.probs, &labels, k);
            if !loss.is_finite() {
                return Err(ModelError::DivergedLoss {
                    epoch,
                    batch: bi,
                    detail: format!("training loss {loss}"),
                });
            }
            let grads = params.backward(&fwd, &labels);
            params.update_running_stats(&fwd);
            adam.step(&mut params, &grads, lr);
            if !params.all_finite() {
                return Err(ModelError::DivergedLoss {
                    epoch,
                    batch: bi,
                    detail: "non-finite parameter after optimizer step".into(),
                });
            }
            loss_sum += loss * idx.len() as f64;
        }
        let (val_loss, val_acc) = evaluate_loss(&params, val_set, train_cfg.batch_size.max(32))?;
        if !val_loss.is_finite() {
            return Err(ModelError::DivergedLoss {
                epoch,
                batch: 0,
                detail: format!("validation loss {val_loss}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.n as f64,
            val_loss,
            val_acc,
            lr,
        };
        log::debug!(
            "epoch {epoch}: train_loss {:.5} val_loss {val_loss:.5} val_acc {val_acc:.4} lr {lr:e}",
            record.train_loss
        );
        history.push(record);

        sched.observe(val_loss);
        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            best = (params.clone(), epoch, val_loss);
        }
        if stop {
            stopped_early = true;
            break;
        }
    }

    let (params, best_epoch, best_val_loss) = best;
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
