//! Bayes by Backprop: a diagonal Gaussian posterior over every network
//! parameter, trained on the evidence lower bound with reparameterized
//! gradients and used through posterior-sample prediction.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    batches, diverged, fresh_tag, Checkpoint, CheckpointMeta, Dataset, DropoutMode, Momentum, Network, Tensor,
    TrainConfig, VERSION,
};
use crate::stats::EmpiricalDensity;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`softplus`] for `s > 0`.
pub fn softplus_inv(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

/// `ln softplus(x)`, finite for every finite `x`.
pub fn log_softplus(x: f64) -> f64 {
    if x < -30.0 {
        // softplus(x) = e^x (1 - e^x / 2 + ...)
        x - 0.5 * x.exp()
    } else {
        softplus(x).ln()
    }
}

/// `sigmoid(x) / softplus(x)`, which tends to 1 as `x -> -inf`.
fn sigmoid_over_softplus(x: f64) -> f64 {
    if x < -30.0 {
        1.0 - 0.5 * x.exp()
    } else {
        sigmoid(x) / softplus(x)
    }
}

/// `KL(N(mu, sigma^2) || N(0, prior^2))`.
pub fn gaussian_kl(mu: f64, sigma: f64, prior_sigma: f64) -> f64 {
    (prior_sigma / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * prior_sigma * prior_sigma) - 0.5
}

/// [`gaussian_kl`] with `sigma = softplus(rho)`, stable for very negative `rho`.
fn gaussian_kl_rho(mu: f64, rho: f64, prior_sigma: f64) -> f64 {
    let sigma = softplus(rho);
    prior_sigma.ln() - log_softplus(rho) + (sigma * sigma + mu * mu) / (2.0 * prior_sigma * prior_sigma) - 0.5
}

/// One posterior draw `w = mu + sigma * eps`, tagged for its gradient pass.
#[derive(Debug, Clone)]
pub struct WeightSample {
    pub w: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    tag: u64,
    state_tag: u64,
}

/// Variational counterpart of a [`Network`]: `mu` lives in the wrapped
/// network, `sigma = softplus(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalNetwork {
    net: Network,
    rho: Vec<Vec<f64>>,
    prior_sigma: f64,
    obs_sigma: f64,
}

impl VariationalNetwork {
    /// Posterior centered on `net` with a common initial `rho`.
    pub fn from_network(net: Network, rho_init: f64, prior_sigma: f64, obs_sigma: f64) -> Result<Self> {
        if !(prior_sigma > 0.0) || !(obs_sigma > 0.0) || !rho_init.is_finite() {
            return Err(Error::Config(format!(
                "prior sigma {prior_sigma} and observation sigma {obs_sigma} must be positive"
            )));
        }
        let rho = net.params().iter().map(|p| vec![rho_init; p.len()]).collect();
        Ok(Self {
            net,
            rho,
            prior_sigma,
            obs_sigma,
        })
    }

    pub fn from_parts(net: Network, rho: Vec<Vec<f64>>, prior_sigma: f64, obs_sigma: f64) -> Result<Self> {
        let mut v = Self::from_network(net, 0.0, prior_sigma, obs_sigma)?;
        if rho.len() != v.rho.len() || rho.iter().zip(&v.rho).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("rho buffers do not match the network".into()));
        }
        v.rho = rho;
        Ok(v)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn mu(&self) -> &[Vec<f64>] {
        self.net.params()
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn sigma(&self) -> Vec<Vec<f64>> {
        self.rho.iter().map(|r| r.iter().map(|&x| softplus(x)).collect()).collect()
    }

    pub fn prior_sigma(&self) -> f64 {
        self.prior_sigma
    }

    pub fn obs_sigma(&self) -> f64 {
        self.obs_sigma
    }

    /// Twice the deterministic parameter count.
    pub fn n_params(&self) -> usize {
        2 * self.net.n_params()
    }

    /// Identifies the current `(mu, rho)`; changes on every update.
    fn state_tag(&self) -> u64 {
        self.net.tag()
    }

    pub fn set_state(&mut self, mu: Vec<Vec<f64>>, rho: Vec<Vec<f64>>) -> Result<()> {
        if rho.len() != self.rho.len() || rho.iter().zip(&self.rho).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("rho buffers do not match the network".into()));
        }
        self.net.set_params(mu)?;
        self.rho = rho;
        Ok(())
    }

    /// Draws `eps ~ N(0, 1)` for every parameter.
    pub fn sample_weights(&self, rng: &mut dyn RngCore) -> WeightSample {
        let eps: Vec<Vec<f64>> = self
            .rho
            .iter()
            .map(|r| r.iter().map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        self.weights_at(eps)
    }

    /// `w = mu + sigma * eps` for a given noise draw.
    pub fn weights_at(&self, eps: Vec<Vec<f64>>) -> WeightSample {
        let w = self
            .mu()
            .iter()
            .zip(&self.rho)
            .zip(&eps)
            .map(|((m, r), e)| {
                m.iter()
                    .zip(r)
                    .zip(e)
                    .map(|((&m, &r), &e)| m + softplus(r) * e)
                    .collect()
            })
            .collect();
        WeightSample {
            w,
            eps,
            tag: fresh_tag(),
            state_tag: self.state_tag(),
        }
    }

    /// Closed-form `KL(q || prior)`.
    pub fn kl(&self) -> f64 {
        self.mu()
            .iter()
            .flatten()
            .zip(self.rho.iter().flatten())
            .map(|(&m, &r)| gaussian_kl_rho(m, r, self.prior_sigma))
            .sum()
    }

    /// `log q(w | theta)` for a draw.
    pub fn log_q(&self, s: &WeightSample) -> f64 {
        self.rho
            .iter()
            .flatten()
            .zip(s.eps.iter().flatten())
            .map(|(&r, &e)| -0.5 * LN_2PI - log_softplus(r) - 0.5 * e * e)
            .sum()
    }

    /// `log P(w)` under the isotropic prior.
    pub fn log_prior(&self, s: &WeightSample) -> f64 {
        let p = self.prior_sigma;
        s.w.iter()
            .flatten()
            .map(|&w| -0.5 * LN_2PI - p.ln() - 0.5 * (w / p).powi(2))
            .sum()
    }

    /// Gaussian negative log-likelihood of `data[idx]` under weights `s`.
    fn nll(&self, s: &WeightSample, data: &Dataset, idx: &[usize]) -> Result<f64> {
        let s2 = self.obs_sigma * self.obs_sigma;
        let mut out = 0.0;
        for &i in idx {
            let y = self.net.forward_with(&s.w, s.tag, &data.xs[i], DropoutMode::Off)?.output;
            out += 0.5 * (y - data.ys[i]).powi(2) / s2 + 0.5 * (LN_2PI + s2.ln());
        }
        Ok(out)
    }

    /// Per-datum objective at a fixed draw:
    /// `[kl_weight (log q - log P(w)) - log P(D_B | w)] / |B| + lambda ||w_b||_1`.
    pub fn objective(&self, s: &WeightSample, data: &Dataset, idx: &[usize], kl_weight: f64) -> Result<f64> {
        let complexity = self.log_q(s) - self.log_prior(s);
        let nll = self.nll(s, data, idx)?;
        Ok((kl_weight * complexity + nll) / idx.len() as f64 + self.net.l1_penalty(&s.w))
    }

    /// Gradients of [`VariationalNetwork::objective`] with respect to
    /// `(mu, rho)` at the fixed draw `s`:
    /// `d_mu = df/dw + df/dmu`, `d_sigma = (df/dw) eps + df/dsigma`,
    /// `d_rho = d_sigma * sigmoid(rho)`.
    pub fn gradients(
        &self,
        s: &WeightSample,
        data: &Dataset,
        idx: &[usize],
        kl_weight: f64,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if s.state_tag != self.state_tag() {
            return Err(Error::Contract("weight sample drawn from a different posterior state".into()));
        }
        let nb = idx.len() as f64;
        let s2 = self.obs_sigma * self.obs_sigma;
        let mut gw = self.net.zero_grads();
        let mut nll = 0.0;
        for &i in idx {
            let cache = self.net.forward_with(&s.w, s.tag, &data.xs[i], DropoutMode::Off)?;
            let err = cache.output - data.ys[i];
            nll += 0.5 * err * err / s2 + 0.5 * (LN_2PI + s2.ln());
            self.net.accumulate_backward(&s.w, s.tag, &cache, err / (s2 * nb), &mut gw)?;
        }
        self.net.add_l1_subgradient(&s.w, &mut gw);

        let kw = kl_weight / nb;
        let p2 = self.prior_sigma * self.prior_sigma;
        let mut d_mu = self.net.zero_grads();
        let mut d_rho = self.net.zero_grads();
        for l in 0..gw.len() {
            for k in 0..gw[l].len() {
                let (r, e, w) = (self.rho[l][k], s.eps[l][k], s.w[l][k]);
                // complexity c = log q(w | mu, sigma) - log P(w) with w = mu + sigma eps;
                // the eps / sigma terms of dc/dw and dc/dmu cancel, and
                // d/dsigma of -ln(sigma) times sigmoid(rho) is -sigmoid/softplus
                let g = gw[l][k] + kw * w / p2;
                d_mu[l][k] = g;
                d_rho[l][k] = g * e * sigmoid(r) - kw * sigmoid_over_softplus(r);
            }
        }
        let f = (kl_weight * (self.log_q(s) - self.log_prior(s)) + nll) / nb + self.net.l1_penalty(&s.w);
        Ok((f, d_mu, d_rho))
    }

    /// Output under one fresh posterior draw.
    pub fn sample_output(&self, x: &Tensor, rng: &mut dyn RngCore) -> Result<f64> {
        let s = self.sample_weights(rng);
        Ok(self.net.forward_with(&s.w, s.tag, x, DropoutMode::Off)?.output)
    }

    /// Output of the mean network.
    pub fn mean_output(&self, x: &Tensor) -> Result<f64> {
        self.net.predict(x)
    }

    pub fn to_checkpoint(&self, seed: u64, config: serde_json::Value) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                format: "DCNN".into(),
                version: VERSION,
                variational: true,
                architecture: self.net.specs().to_vec(),
                input_shape: self.net.input_shape().to_vec(),
                seed,
                prior_sigma: Some(self.prior_sigma),
                obs_sigma: Some(self.obs_sigma),
                target_scaler: None,
                config,
            },
            buffers: vec![self.mu().to_vec(), self.rho.clone()],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if !ck.meta.variational || ck.buffers.len() != 2 {
            return Err(Error::Validation("checkpoint does not hold a variational network".into()));
        }
        let net = ck.network()?;
        Self::from_parts(
            net,
            ck.buffers[1].clone(),
            ck.meta.prior_sigma.unwrap_or(1.0),
            ck.meta.obs_sigma.unwrap_or(1.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbbConfig {
    pub train: TrainConfig,
    pub prior_sigma: f64,
    /// Initial `rho` for every parameter.
    pub rho_init: f64,
    /// Posterior draws per gradient step.
    pub n_train_samples: usize,
    /// Posterior draws averaged in the validation objective.
    pub val_draws: usize,
    /// Predictive draws per nowcast.
    pub n_predict: usize,
}

impl Default for BbbConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            prior_sigma: 1.0,
            rho_init: -5.0,
            n_train_samples: 1,
            val_draws: 10,
            n_predict: 100,
        }
    }
}

/// Training record of a variational network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BbbTrainState {
    /// Mean per-datum negative ELBO of each epoch's minibatches.
    pub elbo_history: Vec<f64>,
    /// Per-datum negative validation ELBO with the KL term at full weight.
    pub val_history: Vec<f64>,
    /// Weight on the complexity term of every minibatch (`1 / num_batches`).
    pub kl_weight: f64,
    pub n_train_samples: usize,
    pub rng_seed: u64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Residual RMSE of a fitted deterministic network on `data`, floored at
/// 1e-6. Pass held-out data for an honest noise scale.
pub fn pilot_obs_sigma(net: &Network, data: &Dataset) -> Result<f64> {
    let mse = net.mse(data)?;
    let s = mse.sqrt();
    Ok(if s > 1e-6 && s.is_finite() { s } else { 1e-6f64.max(s) })
}

/// Minimizes the negative ELBO by SGD with momentum on `(mu, rho)`,
/// early stopping on the validation objective.
pub fn train_bbb(
    vnet: &mut VariationalNetwork,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &BbbConfig,
) -> Result<BbbTrainState> {
    let tc = &cfg.train;
    tc.validate()?;
    if cfg.n_train_samples == 0 || cfg.val_draws == 0 {
        return Err(Error::Config("posterior draw counts must be at least 1".into()));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.rng_seed);
    let num_batches = train_set.len().div_ceil(tc.batch_size);
    let kl_weight = 1.0 / num_batches as f64;
    let mut state = BbbTrainState {
        kl_weight,
        n_train_samples: cfg.n_train_samples,
        rng_seed: tc.rng_seed,
        ..BbbTrainState::default()
    };
    let mut buffers: Vec<Vec<f64>> = vnet.mu().iter().chain(&vnet.rho).cloned().collect();
    let n_layers = vnet.rho.len();
    let mut opt = Momentum::new(&buffers, tc.learning_rate, tc.momentum);
    let mut best = (f64::INFINITY, vnet.mu().to_vec(), vnet.rho.clone());
    let mut since_best = 0;
    let val_all: Vec<usize> = (0..val_set.len()).collect();

    for epoch in 0..tc.max_epochs {
        let mut total = 0.0;
        for idx in batches(train_set.len(), tc.batch_size, &mut rng) {
            let mut grads: Vec<Vec<f64>> = buffers.iter().map(|b| vec![0.0; b.len()]).collect();
            let mut f = 0.0;
            for _ in 0..cfg.n_train_samples {
                let s = vnet.sample_weights(&mut rng);
                let (fi, dmu, drho) = vnet.gradients(&s, train_set, &idx, kl_weight).map_err(|e| diverged(e, epoch))?;
                f += fi / cfg.n_train_samples as f64;
                for (g, d) in grads.iter_mut().zip(dmu.iter().chain(&drho)) {
                    for (a, b) in g.iter_mut().zip(d) {
                        *a += b / cfg.n_train_samples as f64;
                    }
                }
            }
            if !f.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    msg: format!("negative ELBO {f}"),
                });
            }
            total += f * idx.len() as f64;
            opt.step(&mut buffers, &grads);
            vnet.set_state(buffers[..n_layers].to_vec(), buffers[n_layers..].to_vec())?;
        }
        state.elbo_history.push(total / train_set.len() as f64);

        // validation: fresh fixed-seed draws so the criterion is comparable across epochs
        let mut vrng = ChaCha8Rng::seed_from_u64(tc.rng_seed ^ 0x005e_ed0f_7a11);
        let full_kl = val_set.len() as f64 / train_set.len() as f64;
        let mut val = 0.0;
        for _ in 0..cfg.val_draws {
            let s = vnet.sample_weights(&mut vrng);
            val += vnet.objective(&s, val_set, &val_all, full_kl).map_err(|e| diverged(e, epoch))? / cfg.val_draws as f64;
        }
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("validation objective {val}"),
            });
        }
        state.val_history.push(val);
        if val < best.0 {
            best = (val, vnet.mu().to_vec(), vnet.rho.clone());
            state.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.early_stop_patience {
                state.stopped_early = true;
                break;
            }
        }
    }
    vnet.set_state(best.1, best.2)?;
    Ok(state)
}

/// `n` outputs, each under its own posterior draw. Draw `i` uses stream `i`
/// of a ChaCha8 generator seeded with `seed`, so results do not depend on
/// thread scheduling.
pub fn predict_bbb(vnet: &VariationalNetwork, x: &Tensor, n: usize, seed: u64) -> Result<EmpiricalDensity> {
    if n < 2 {
        return Err(Error::Contract(format!("predictive density needs at least 2 draws, got {n}")));
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            vnet.sample_output(x, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalDensity::new(samples)
}
