use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::fredmd::RaggedPanel;
use crate::statespace::{
    ar2_from_unconstrained, ar2_to_unconstrained, fit_mle_from, initial_covariance, kalman_filter, rts_smooth,
    OptimizerConfig, ParamMap, StateSpaceModel,
};

/// Filtered factor values on a monthly grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub first: YearMonth,
    pub values: Vec<f64>,
}

impl FactorScores {
    pub fn get(&self, ym: YearMonth) -> Option<f64> {
        let off = ym.months_since(self.first);
        (off >= 0).then(|| self.values.get(off as usize).copied()).flatten()
    }

    pub fn last(&self) -> YearMonth {
        self.first.add_months(self.values.len() as i64 - 1)
    }
}

/// One-factor model with AR(2) factor and AR(1) idiosyncratic terms:
///
/// ```text
/// x_jt = lambda_j f_t + u_jt
/// u_jt = c_j u_j,t-1 + e_jt,            e_jt ~ N(0, sigma2_j)
/// f_t  = a_1 f_t-1 + a_2 f_t-2 + n_t,   n_t ~ N(0, sigma2_f)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfmSpec {
    pub mnemonics: Vec<String>,
    pub loadings: Vec<f64>,
    pub factor_ar: [f64; 2],
    pub factor_var: f64,
    pub idio_ar: Vec<f64>,
    pub idio_var: Vec<f64>,
    pub factor_scores: FactorScores,
    pub loglik: f64,
    pub em_iterations: usize,
    pub refine_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfmConfig {
    pub max_em_iter: usize,
    pub em_tol: f64,
    /// Quasi-Newton pass on the exact likelihood after EM.
    pub refine: OptimizerConfig,
}

impl Default for DfmConfig {
    fn default() -> Self {
        Self {
            max_em_iter: 200,
            em_tol: 1e-7,
            refine: OptimizerConfig {
                max_iter: 100,
                rel_tol: 1e-8,
                grad_step: 1e-5,
            },
        }
    }
}

/// Unconditional variance of a stationary AR(2) with innovation variance `s2`.
pub fn ar2_variance(a1: f64, a2: f64, s2: f64) -> f64 {
    s2 * (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1))
}

#[derive(Debug, Clone, PartialEq)]
struct Params {
    loadings: Vec<f64>,
    a: [f64; 2],
    c: Vec<f64>,
    s2: Vec<f64>,
}

impl Params {
    fn n(&self) -> usize {
        self.loadings.len()
    }

    /// State `[f_t, f_t-1, u_1t, ..., u_Nt]`, no measurement noise.
    fn model(&self, factor_var: f64) -> Result<StateSpaceModel> {
        let n = self.n();
        let m = n + 2;
        let mut z = DMatrix::zeros(n, m);
        let mut t = DMatrix::zeros(m, m);
        let mut r = DMatrix::zeros(m, n + 1);
        let mut q = DMatrix::zeros(n + 1, n + 1);
        t[(0, 0)] = self.a[0];
        t[(0, 1)] = self.a[1];
        t[(1, 0)] = 1.0;
        r[(0, 0)] = 1.0;
        q[(0, 0)] = factor_var;
        for j in 0..n {
            z[(j, 0)] = self.loadings[j];
            z[(j, j + 2)] = 1.0;
            t[(j + 2, j + 2)] = self.c[j];
            r[(j + 2, j + 1)] = 1.0;
            q[(j + 1, j + 1)] = self.s2[j];
        }
        let rqr = &r * &q * r.transpose();
        let p1 = initial_covariance(&t, &rqr)?;
        StateSpaceModel::new(z, DMatrix::zeros(n, n), t, r, q, DVector::zeros(m), p1)
    }

    fn to_theta(&self) -> Vec<f64> {
        let (u1, u2) = ar2_to_unconstrained(self.a[0], self.a[1]);
        let mut th = self.loadings.clone();
        th.push(u1);
        th.push(u2);
        th.extend(self.c.iter().map(|c| c.clamp(-0.999, 0.999).atanh()));
        th.extend(self.s2.iter().map(|s| s.ln()));
        th
    }

    fn from_theta(th: &[f64], n: usize) -> Self {
        let (a1, a2) = ar2_from_unconstrained(th[n], th[n + 1]);
        Self {
            loadings: th[..n].to_vec(),
            a: [a1, a2],
            c: th[n + 2..2 * n + 2].iter().map(|x| x.tanh()).collect(),
            s2: th[2 * n + 2..3 * n + 2].iter().map(|x| x.exp()).collect(),
        }
    }
}

struct DfmTemplate {
    n: usize,
    factor_var: f64,
    start: Vec<f64>,
}

impl ParamMap for DfmTemplate {
    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n).map(|j| format!("lambda_{j}")).collect();
        v.push("pacf_1".into());
        v.push("pacf_2".into());
        v.extend((0..self.n).map(|j| format!("atanh_c_{j}")));
        v.extend((0..self.n).map(|j| format!("log_sigma2_{j}")));
        v
    }

    fn initial(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn build(&self, theta: &[f64]) -> Result<StateSpaceModel> {
        Params::from_theta(theta, self.n).model(self.factor_var)
    }
}

fn ols_ar(y: &[f64], lags: usize) -> (Vec<f64>, f64) {
    let k = lags;
    let rows = y.len().saturating_sub(k);
    if rows <= k {
        return (vec![0.0; k], 1.0);
    }
    let x = DMatrix::from_fn(rows, k, |i, j| y[i + k - 1 - j]);
    let yy = DVector::from_fn(rows, |i, _| y[i + k]);
    let xtx = x.transpose() * &x;
    let coef = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&(x.transpose() * &yy)))
        .unwrap_or_else(|| DVector::zeros(k));
    let resid = &yy - &x * &coef;
    (coef.iter().copied().collect(), resid.norm_squared() / rows as f64)
}

/// Starting values from the first principal component of the complete rows.
fn pca_start(obs: &[Vec<Option<f64>>], n: usize, factor_var: f64) -> Result<Params> {
    let rows: Vec<Vec<f64>> = obs
        .iter()
        .filter(|r| r.iter().all(Option::is_some))
        .map(|r| r.iter().map(|v| v.unwrap()).collect())
        .collect();
    if rows.len() < 3 * n + 10 {
        return Err(Error::InsufficientData(format!(
            "{} complete rows for a {n}-series factor model",
            rows.len()
        )));
    }
    let len = rows.len() as f64;
    let x = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let cov = x.transpose() * &x / len;
    let eig = cov.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let mut v = eig.eigenvectors.column(k).into_owned();
    if v[0] < 0.0 {
        v = -v;
    }
    let pc: Vec<f64> = (&x * &v).iter().copied().collect();
    let (a, s2) = ols_ar(&pc, 2);
    let (u1, u2) = ar2_to_unconstrained(a[0], a[1]);
    let (a1, a2) = ar2_from_unconstrained(u1, u2);
    // rescale so the factor innovation variance equals `factor_var`
    let scale = (s2 / factor_var).sqrt().max(1e-6);
    let loadings: Vec<f64> = v.iter().map(|l| l * scale).collect();
    let f: Vec<f64> = pc.iter().map(|p| p / scale).collect();
    let mut c = Vec::with_capacity(n);
    let mut s2v = Vec::with_capacity(n);
    for j in 0..n {
        let u: Vec<f64> = rows.iter().zip(&f).map(|(r, ft)| r[j] - loadings[j] * ft).collect();
        let (cj, sj) = ols_ar(&u, 1);
        c.push(cj[0].clamp(-0.95, 0.95));
        s2v.push(sj.max(1e-4));
    }
    Ok(Params {
        loadings,
        a: [a1, a2],
        c,
        s2: s2v,
    })
}

/// Second moments `E[f_t^2]`, `E[f_t f_t-1]`, `E[f_t-1^2]` and means from a
/// smoothed state.
fn factor_moments(mean: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, f64, f64, f64, f64) {
    let (m0, m1) = (mean[0], mean[1]);
    (m0, m1, cov[(0, 0)] + m0 * m0, cov[(0, 1)] + m0 * m1, cov[(1, 1)] + m1 * m1)
}

/// One expectation/conditional-maximization sweep.
fn ecm_step(p: &Params, obs: &[Vec<Option<f64>>], factor_var: f64) -> Result<(Params, f64)> {
    let model = p.model(factor_var)?;
    let filt = kalman_filter(&model, obs)?;
    let sm = rts_smooth(&model, &filt)?;
    let n = p.n();
    let len = obs.len();

    // factor AR(2) from E[f_t (f_t-1, f_t-2)] and E[(f_t-1, f_t-2)(...)']
    let mut s11 = DMatrix::<f64>::zeros(2, 2);
    let mut s10 = DVector::<f64>::zeros(2);
    for t in 1..len {
        let prev = &sm.means[t - 1];
        for k in 0..2 {
            for l in 0..2 {
                s11[(k, l)] += sm.covs[t - 1][(k, l)] + prev[k] * prev[l];
            }
            s10[k] += sm.lag_covs[t][(0, k)] + sm.means[t][0] * prev[k];
        }
    }
    let mut a = p.a;
    if let Some(sol) = s11.clone().cholesky().map(|c| c.solve(&s10)) {
        let (u1, u2) = ar2_to_unconstrained(sol[0], sol[1]);
        let (a1, a2) = ar2_from_unconstrained(u1, u2);
        a = [a1, a2];
    }

    let mut next = Params {
        loadings: p.loadings.clone(),
        a,
        c: p.c.clone(),
        s2: p.s2.clone(),
    };
    for j in 0..n {
        let pairs: Vec<(f64, f64, (f64, f64, f64, f64, f64))> = (1..len)
            .filter_map(|t| {
                let (x, xp) = (obs[t][j]?, obs[t - 1][j]?);
                Some((x, xp, factor_moments(&sm.means[t], &sm.covs[t])))
            })
            .collect();
        if pairs.len() < 5 {
            continue;
        }
        let mut lam = next.loadings[j];
        let mut c = next.c[j];
        for _ in 0..2 {
            // lambda given c: regress x_t - c x_t-1 on f_t - c f_t-1
            let (mut num, mut den) = (0.0, 0.0);
            for &(x, xp, (m0, m1, e00, e01, e11)) in &pairs {
                let w = x - c * xp;
                num += w * (m0 - c * m1);
                den += e00 - 2.0 * c * e01 + c * c * e11;
            }
            if den > 0.0 {
                lam = num / den;
            }
            // c given lambda: AR(1) on u_t = x_t - lambda f_t
            let (mut num, mut den) = (0.0, 0.0);
            for &(x, xp, (m0, m1, _, e01, e11)) in &pairs {
                num += x * xp - lam * x * m1 - lam * xp * m0 + lam * lam * e01;
                den += xp * xp - 2.0 * lam * xp * m1 + lam * lam * e11;
            }
            if den > 0.0 {
                c = (num / den).clamp(-0.99, 0.99);
            }
        }
        let mut ss = 0.0;
        for &(x, xp, (m0, m1, e00, e01, e11)) in &pairs {
            let w = x - c * xp;
            let g2 = e00 - 2.0 * c * e01 + c * c * e11;
            ss += w * w - 2.0 * lam * w * (m0 - c * m1) + lam * lam * g2;
        }
        next.loadings[j] = lam;
        next.c[j] = c;
        next.s2[j] = (ss / pairs.len() as f64).max(1e-6);
    }
    Ok((next, filt.loglik))
}

/// Fits the factor model to a standardized panel; trailing missing cells
/// are allowed and the factor is filtered through them. Passing a previous
/// fit warm-starts the estimation.
pub fn fit_dfm(panel: &RaggedPanel, cfg: &DfmConfig, warm: Option<&DfmSpec>) -> Result<DfmSpec> {
    let n = panel.n_features();
    if n == 0 || panel.values.is_empty() {
        return Err(Error::InsufficientData("empty panel".into()));
    }
    let factor_var = 1.0;
    let obs = &panel.values;
    let start = match warm {
        Some(w) if w.loadings.len() == n => Params {
            loadings: w.loadings.clone(),
            a: w.factor_ar,
            c: w.idio_ar.clone(),
            s2: w.idio_var.clone(),
        },
        _ => pca_start(obs, n, factor_var)?,
    };

    let mut params = start;
    let mut best: Option<(Params, f64)> = None;
    let mut em_iterations = 0;
    let mut trace = Vec::new();
    for _ in 0..cfg.max_em_iter {
        let (next, ll) = ecm_step(&params, obs, factor_var)?;
        trace.push(ll);
        em_iterations += 1;
        let prev_best = best.as_ref().map(|b| b.1);
        if prev_best.is_none_or(|b| ll > b) {
            best = Some((params.clone(), ll));
        }
        if let Some(b) = prev_best {
            if (ll - b) / b.abs().max(1.0) < cfg.em_tol {
                break;
            }
        }
        params = next;
    }
    let (em_params, _) = best.ok_or_else(|| Error::Estimation {
        msg: "no EM iterations ran".into(),
        trace: trace.clone(),
    })?;

    let template = DfmTemplate {
        n,
        factor_var,
        start: em_params.to_theta(),
    };
    let fit = fit_mle_from(&template, &template.start, obs, &cfg.refine)?;
    let mut p = Params::from_theta(&fit.theta, n);
    let filt = kalman_filter(&fit.model, obs)?;
    let mut scores: Vec<f64> = filt.filtered_means.iter().map(|a| a[0]).collect();
    if p.loadings[0] < 0.0 {
        p.loadings.iter_mut().for_each(|l| *l = -*l);
        scores.iter_mut().for_each(|f| *f = -*f);
    }
    Ok(DfmSpec {
        mnemonics: panel.mnemonics.clone(),
        loadings: p.loadings,
        factor_ar: p.a,
        factor_var,
        idio_ar: p.c,
        idio_var: p.s2,
        factor_scores: FactorScores {
            first: panel.dates[0],
            values: scores,
        },
        loglik: fit.loglik,
        em_iterations,
        refine_iterations: fit.iterations,
    })
}

impl DfmSpec {
    /// Unconditional variance of the factor process.
    pub fn factor_variance(&self) -> f64 {
        ar2_variance(self.factor_ar[0], self.factor_ar[1], self.factor_var)
    }

    pub fn state_space(&self) -> Result<StateSpaceModel> {
        Params {
            loadings: self.loadings.clone(),
            a: self.factor_ar,
            c: self.idio_ar.clone(),
            s2: self.idio_var.clone(),
        }
        .model(self.factor_var)
    }
}
