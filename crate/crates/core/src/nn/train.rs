use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{fresh_tag, Dataset, Network};

/// How the bottleneck L1 penalty enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum L1Mode {
    /// Gradient step on the smooth loss, then soft-thresholding by `alpha * lambda`.
    #[default]
    Proximal,
    /// `lambda * sign(w)` added to the gradient.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub rng_seed: u64,
    /// Trailing quarters of the training window held out for early stopping.
    pub validation_quarters: usize,
    pub l1_mode: L1Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            max_epochs: 500,
            batch_size: 16,
            early_stop_patience: 25,
            rng_seed: 0,
            validation_quarters: 8,
            l1_mode: L1Mode::Proximal,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early-stop patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses. `train_loss` is the mean minibatch objective of the
/// epoch; `val_loss` the validation loss after it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 0-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }
}

/// Standardizes targets; engines train on `(y - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Mean and (N-1) std; a degenerate spread falls back to 1.
    pub fn fit(ys: &[f64]) -> Self {
        let n = ys.len();
        if n == 0 {
            return Self::identity();
        }
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// SGD with momentum: `v <- m v - alpha g; w <- w + v`.
pub(crate) struct Momentum {
    velocity: Vec<Vec<f64>>,
    alpha: f64,
    momentum: f64,
}

impl Momentum {
    pub(crate) fn new(shapes: &[Vec<f64>], alpha: f64, momentum: f64) -> Self {
        Self {
            velocity: shapes.iter().map(|p| vec![0.0; p.len()]).collect(),
            alpha,
            momentum,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((w, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.momentum * *vi - self.alpha * gi;
                *w += *vi;
            }
        }
    }
}

pub(crate) fn soft_threshold(w: &mut [f64], t: f64) {
    for v in w {
        *v = v.signum() * (v.abs() - t).max(0.0);
    }
}

/// Minibatch order for one epoch.
pub(crate) fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub(crate) fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Divergence { epoch, msg },
        e => e,
    }
}

/// Trains on MSE + L1 with early stopping on validation MSE. The network
/// ends holding the best-validation parameters.
pub fn train(net: &mut Network, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = net.params().to_vec();
    let mut opt = Momentum::new(&params, cfg.learning_rate, cfg.momentum);
    let bottleneck = net.bottleneck();
    let mut history = History::default();
    let mut best = (f64::INFINITY, params.clone());
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let mut epoch_loss = 0.0;
        let plan = batches(train_set.len(), cfg.batch_size, &mut rng);
        for idx in &plan {
            let tag = fresh_tag();
            let (mse, mut grads) = net
                .mse_and_grad(&params, tag, train_set, idx, Some(&mut rng))
                .map_err(|e| diverged(e, epoch))?;
            let loss = mse + net.l1_penalty(&params);
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    msg: format!("training loss {loss}"),
                });
            }
            epoch_loss += loss * idx.len() as f64;
            if cfg.l1_mode == L1Mode::Subgradient {
                net.add_l1_subgradient(&params, &mut grads);
            }
            opt.step(&mut params, &grads);
            if let (L1Mode::Proximal, Some((lambda, nw))) = (cfg.l1_mode, bottleneck) {
                soft_threshold(&mut params[0][..nw], cfg.learning_rate * lambda);
            }
        }
        history.train_loss.push(epoch_loss / train_set.len() as f64);

        net.set_params(params.clone())?;
        let val = net.mse(val_set).map_err(|e| diverged(e, epoch))?;
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("validation loss {val}"),
            });
        }
        history.val_loss.push(val);
        if val < best.0 {
            best = (val, params.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    net.set_params(best.1)?;
    Ok(history)
}
