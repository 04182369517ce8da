use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::filter::loglikelihood;
use super::lyapunov::initial_covariance;
use super::model::StateSpaceModel;

/// Maps an unconstrained parameter vector to a model.
pub trait ParamMap {
    fn names(&self) -> Vec<String>;
    /// Starting point in unconstrained coordinates.
    fn initial(&self) -> Vec<f64>;
    fn build(&self, theta: &[f64]) -> Result<StateSpaceModel>;
}

/// Bijection from the real line onto a parameter's admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Variances: `exp`.
    Log,
    /// AR(1) coefficients: `tanh`, keeping the root inside the unit circle.
    Tanh,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
            Transform::Tanh => x.tanh(),
        }
    }

    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.max(1e-300).ln(),
            Transform::Tanh => v.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh(),
        }
    }
}

/// Maps unconstrained `(u1, u2)` to stationary AR(2) coefficients through
/// partial autocorrelations `psi_i = tanh(u_i)`: `a1 = psi1 (1 - psi2)`,
/// `a2 = psi2`.
pub fn ar2_from_unconstrained(u1: f64, u2: f64) -> (f64, f64) {
    let (p1, p2) = (u1.tanh(), u2.tanh());
    (p1 * (1.0 - p2), p2)
}

pub fn ar2_to_unconstrained(a1: f64, a2: f64) -> (f64, f64) {
    let p2 = a2.clamp(-1.0 + 1e-9, 1.0 - 1e-9);
    let p1 = (a1 / (1.0 - p2)).clamp(-1.0 + 1e-9, 1.0 - 1e-9);
    (p1.atanh(), p2.atanh())
}

/// A model entry addressed by a free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entry {
    Z(usize, usize),
    D(usize),
    H(usize, usize),
    T(usize, usize),
    C(usize),
    Q(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub name: String,
    pub entry: Entry,
    pub transform: Transform,
}

/// Fixed model with a list of free entries. With `stationary_init`, each
/// build recomputes `(a1, P1)` from the transition.
#[derive(Debug, Clone)]
pub struct ModelTemplate {
    pub base: StateSpaceModel,
    pub free: Vec<FreeParam>,
    pub stationary_init: bool,
}

impl ParamMap for ModelTemplate {
    fn names(&self) -> Vec<String> {
        self.free.iter().map(|p| p.name.clone()).collect()
    }

    fn initial(&self) -> Vec<f64> {
        let m = &self.base;
        self.free
            .iter()
            .map(|p| {
                let v = match p.entry {
                    Entry::Z(i, j) => m.z[(i, j)],
                    Entry::D(i) => m.d[i],
                    Entry::H(i, j) => m.h[(i, j)],
                    Entry::T(i, j) => m.t[(i, j)],
                    Entry::C(i) => m.c[i],
                    Entry::Q(i, j) => m.q[(i, j)],
                };
                p.transform.inverse(v)
            })
            .collect()
    }

    fn build(&self, theta: &[f64]) -> Result<StateSpaceModel> {
        let mut m = self.base.clone();
        for (p, &x) in self.free.iter().zip(theta) {
            let v = p.transform.forward(x);
            match p.entry {
                Entry::Z(i, j) => m.z[(i, j)] = v,
                Entry::D(i) => m.d[i] = v,
                Entry::H(i, j) => {
                    m.h[(i, j)] = v;
                    m.h[(j, i)] = v;
                }
                Entry::T(i, j) => m.t[(i, j)] = v,
                Entry::C(i) => m.c[i] = v,
                Entry::Q(i, j) => {
                    m.q[(i, j)] = v;
                    m.q[(j, i)] = v;
                }
            }
        }
        if self.stationary_init {
            m.p1 = initial_covariance(&m.t, &m.state_cov())?;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Stop once `(ll_new - ll_old) / max(1, |ll_old|)` falls below this.
    pub rel_tol: f64,
    /// Central-difference step for numerical gradients.
    pub grad_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            grad_step: 1e-5,
        }
    }
}

/// A maximum-likelihood fit with its iteration history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleFit {
    pub model: StateSpaceModel,
    pub names: Vec<String>,
    /// Unconstrained optimum.
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Log-likelihood after each accepted iteration, starting value first.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `f` by BFGS with numerical gradients and a backtracking line
/// search. Returns `(argmax, trace, converged)`; the trace never decreases.
///
/// `f` returns `None` for inadmissible points, which the line search
/// treats as rejected steps.
pub fn bfgs_maximize<F>(f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<(Vec<f64>, Vec<f64>, bool)>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let f0 = f(x0).filter(|v| v.is_finite()).ok_or_else(|| Error::Estimation {
        msg: "log-likelihood is not finite at the starting point".into(),
        trace: vec![],
    })?;
    let mut trace = vec![f0];
    if n == 0 {
        return Ok((vec![], trace, true));
    }
    let grad = |x: &DVector<f64>, fx: f64| -> DVector<f64> {
        DVector::from_fn(n, |i, _| {
            let h = cfg.grad_step * (1.0 + x[i].abs());
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            match (f(xp.as_slice()), f(xm.as_slice())) {
                (Some(a), Some(b)) if a.is_finite() && b.is_finite() => (a - b) / (2.0 * h),
                (Some(a), _) if a.is_finite() => (a - fx) / h,
                (_, Some(b)) if b.is_finite() => (fx - b) / h,
                _ => 0.0,
            }
        })
    };

    let mut x = DVector::from_column_slice(x0);
    let mut fx = f0;
    let mut g = grad(&x, fx);
    // inverse Hessian of the negative log-likelihood
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let mut dir = &hinv * &g;
        if dir.dot(&g) <= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = g.clone();
        }
        // cap the first trial step so a poor curvature guess cannot jump far
        let norm = dir.norm();
        let mut step = if norm > 10.0 { 10.0 / norm } else { 1.0 };
        let slope = g.dot(&dir);
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + &dir * step;
            if let Some(fnew) = f(xn.as_slice()).filter(|v| v.is_finite()) {
                if fnew >= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            converged = true;
            break;
        };
        let gn = grad(&xn, fnew);
        let s = &xn - &x;
        // gradients of the negative log-likelihood
        let y = &g - &gn;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let a = &eye - &s * y.transpose() * rho;
            hinv = &a * &hinv * a.transpose() + &s * s.transpose() * rho;
        }
        let improvement = (fnew - fx) / fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if improvement < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok((x.iter().copied().collect(), trace, converged))
}

/// Maximum-likelihood estimation of the free parameters of `template`.
pub fn fit_mle(template: &dyn ParamMap, obs: &[Vec<Option<f64>>], cfg: &OptimizerConfig) -> Result<MleFit> {
    fit_mle_from(template, &template.initial(), obs, cfg)
}

/// [`fit_mle`] started at `theta0`.
pub fn fit_mle_from(
    template: &dyn ParamMap,
    theta0: &[f64],
    obs: &[Vec<Option<f64>>],
    cfg: &OptimizerConfig,
) -> Result<MleFit> {
    let objective = |theta: &[f64]| -> Option<f64> {
        let model = template.build(theta).ok()?;
        loglikelihood(&model, obs).ok()
    };
    let start = template.build(theta0)?;
    let ll0 = loglikelihood(&start, obs).map_err(|e| Error::Estimation {
        msg: format!("starting model: {e}"),
        trace: vec![],
    })?;
    if theta0.is_empty() {
        return Ok(MleFit {
            model: start,
            names: vec![],
            theta: vec![],
            loglik: ll0,
            trace: vec![ll0],
            iterations: 0,
            converged: true,
        });
    }
    let (theta, trace, converged) = bfgs_maximize(objective, theta0, cfg)?;
    let model = template.build(&theta)?;
    let loglik = *trace.last().unwrap();
    if !loglik.is_finite() {
        return Err(Error::Estimation {
            msg: "log-likelihood diverged".into(),
            trace,
        });
    }
    Ok(MleFit {
        model,
        names: template.names(),
        theta,
        loglik,
        iterations: trace.len() - 1,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    /// AR(1) observed without noise: `y_t = a_t`, `a_t = phi a_{t-1} + n_t`.
    fn ar1_template(phi: f64, q: f64) -> ModelTemplate {
        let base = StateSpaceModel::new(scalar(1.0), scalar(0.0), scalar(phi), scalar(1.0), scalar(q), DVector::zeros(1), scalar(1.0))
            .unwrap();
        ModelTemplate {
            base,
            free: vec![
                FreeParam {
                    name: "phi".into(),
                    entry: Entry::T(0, 0),
                    transform: Transform::Tanh,
                },
                FreeParam {
                    name: "sigma2".into(),
                    entry: Entry::Q(0, 0),
                    transform: Transform::Log,
                },
            ],
            stationary_init: true,
        }
    }

    fn simulate_ar1(phi: f64, len: usize, seed: u64) -> Vec<Vec<Option<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut x = n.sample(&mut rng) / (1.0 - phi * phi).sqrt();
        (0..len)
            .map(|_| {
                let v = vec![Some(x)];
                x = phi * x + n.sample(&mut rng);
                v
            })
            .collect()
    }

    #[test]
    fn ar1_estimate_is_consistent() {
        let y = simulate_ar1(0.8, 5000, 3);
        let fit = fit_mle(&ar1_template(0.3, 2.0), &y, &OptimizerConfig::default()).unwrap();
        let phi = fit.model.t[(0, 0)];
        assert!((phi - 0.8).abs() < 0.05, "phi = {phi}");
        assert!((fit.model.q[(0, 0)] - 1.0).abs() < 0.1);
        assert!(fit.converged);
    }

    #[test]
    fn trace_never_decreases_from_truth() {
        let y = simulate_ar1(0.8, 400, 5);
        let fit = fit_mle(&ar1_template(0.8, 1.0), &y, &OptimizerConfig::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.loglik >= fit.trace[0]);
    }

    #[test]
    fn no_free_parameters_returns_template() {
        let mut t = ar1_template(0.5, 1.0);
        t.free.clear();
        let y = simulate_ar1(0.5, 50, 1);
        let fit = fit_mle(&t, &y, &OptimizerConfig::default()).unwrap();
        assert_eq!(fit.model, t.build(&[]).unwrap());
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn ar2_map_is_stationary_and_invertible() {
        for &(u1, u2) in &[(0.3, -0.2), (3.0, 2.5), (-4.0, 0.9), (0.0, -3.0)] {
            let (a1, a2) = ar2_from_unconstrained(u1, u2);
            // stationarity triangle
            assert!(a2.abs() < 1.0 && a1 + a2 < 1.0 && a2 - a1 < 1.0);
            let (b1, b2) = ar2_to_unconstrained(a1, a2);
            let (c1, c2) = ar2_from_unconstrained(b1, b2);
            assert!((c1 - a1).abs() < 1e-9 && (c2 - a2).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_start_is_estimation_error() {
        let res = bfgs_maximize(|_| Some(f64::NAN), &[0.0], &OptimizerConfig::default());
        assert!(matches!(res, Err(Error::Estimation { .. })));
    }

    #[test]
    fn fit_serializes_with_names_and_trace() {
        let y = simulate_ar1(0.5, 100, 2);
        let fit = fit_mle(&ar1_template(0.5, 1.0), &y, &OptimizerConfig::default()).unwrap();
        let json = serde_json::to_value(&fit).unwrap();
        assert_eq!(json["names"], serde_json::json!(["phi", "sigma2"]));
        assert!(!json["trace"].as_array().unwrap().is_empty());
        assert_eq!(json["model"]["t"]["rows"], 1);
    }
}
