//! Feed-forward and LSTM regressors with hand-derived gradients.
//!
//! Both models keep their parameters in one flat vector so that the
//! optimizer, gradient clipping, finite-difference checks and serialization
//! all work on the same layout.

mod lstm;
mod mlp;

pub use lstm::{lstm_forward, lstm_train, LstmParams, LstmState};
pub use mlp::{mlp_forward, mlp_train, Activation, MlpParams};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Moment-estimation update with β₁ = 0.9, β₂ = 0.999.
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub early_stop_patience: usize,
    /// Chronological tail of the training rows held out for early stopping.
    pub validation_fraction: f64,
    pub gradient_clip_norm: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 600,
            batch_size: 32,
            seed: 7,
            early_stop_patience: 50,
            validation_fraction: 0.2,
            gradient_clip_norm: 5.0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.batch_size > 0
            && self.early_stop_patience > 0
            && self.gradient_clip_norm > 0.0
            && self.validation_fraction > 0.0
            && self.validation_fraction <= 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Number of epochs completed when validation loss was lowest.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// A model whose parameters live in a flat vector.
pub(crate) trait FlatModel: Clone {
    type Input;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn predict(&self, x: &Self::Input) -> f64;
    /// Runs the forward pass, then adds `dout(output) · ∂output/∂θ` into
    /// `grad`. Returns the output.
    fn accumulate_gradient(&self, x: &Self::Input, dout: &dyn Fn(f64) -> f64, grad: &mut [f64]) -> f64;
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`.
pub(crate) fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

pub(crate) fn mse<M: FlatModel>(model: &M, inputs: &[M::Input], targets: &[f64], idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let r = model.predict(&inputs[i]) - targets[i];
            r * r
        })
        .sum();
    total / idx.len() as f64
}

/// Gradient of the mean squared error over `batch`; returns the batch loss.
pub(crate) fn batch_gradient<M: FlatModel>(
    model: &M,
    inputs: &[M::Input],
    targets: &[f64],
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &i in batch {
        let t = targets[i];
        let out = model.accumulate_gradient(&inputs[i], &|o| scale * (o - t), grad);
        loss += (out - t) * (out - t);
    }
    loss / batch.len() as f64
}

/// Mini-batch training with chronological hold-out and early stopping.
///
/// Inputs are assumed to be in time order; the last `validation_fraction`
/// of them is held out. The returned model is the best-validation snapshot.
pub(crate) fn fit<M: FlatModel>(
    mut model: M,
    inputs: &[M::Input],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(M, TrainTrace)> {
    cfg.validate()?;
    let n = inputs.len();
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let mut train_idx: Vec<usize> = (0..n - n_val).collect();
    let val_idx: Vec<usize> = (n - n_val..n).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba5e);
    let mut adam = Adam::new(model.params().len());
    let mut grad = vec![0.0; model.params().len()];

    let mut trace = TrainTrace::default();
    let mut best = model.clone();
    let mut best_val = mse(&model, inputs, targets, &val_idx);
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let loss = batch_gradient(&model, inputs, targets, batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            clip_global_norm(&mut grad, cfg.gradient_clip_norm);
            match cfg.optimizer {
                Optimizer::Adam => adam.step(model.params_mut(), &grad, cfg.learning_rate),
                Optimizer::Sgd => {
                    for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
        }
        let val = mse(&model, inputs, targets, &val_idx);
        if !val.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch, loss: val });
        }
        trace.train_loss.push(epoch_loss / train_idx.len() as f64);
        trace.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best = model.clone();
            trace.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                trace.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, trace))
}

/// Uniform Glorot initialisation of `out` with limit √(6/(fan_in+fan_out)).
pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    use rand::Rng;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-limit..=limit);
    }
}

pub(crate) fn check_min_rows(n: usize, what: &str) -> Result<()> {
    if n < 30 {
        return Err(Error::InsufficientData(format!("{n} {what}, at least 30 are required")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![3.0, 4.0];
        let norm = clip_global_norm(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let mut p = vec![1.0, -1.0];
        let mut adam = Adam::new(2);
        adam.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { validation_fraction: 0.6, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
