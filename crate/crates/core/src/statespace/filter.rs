use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::model::StateSpaceModel;

/// Output of [`kalman_filter`], indexed by period from 0.
///
/// Innovations and their covariances are restricted to the components
/// observed in that period (listed in `observed`).
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub observed: Vec<Vec<usize>>,
    pub innovations: Vec<DVector<f64>>,
    pub innovation_covs: Vec<DMatrix<f64>>,
    /// `a_{t|t-1}`; entry 0 is `a1`.
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    /// `a_{t|t}`.
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// `a_{T+1|T}` and its covariance.
    pub next_mean: DVector<f64>,
    pub next_cov: DMatrix<f64>,
    pub loglik: f64,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.filtered_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered_means.is_empty()
    }

    /// Innovations scaled by the inverse Cholesky factor of `F_t`, pooled
    /// over periods with at least one observation.
    pub fn standardized_innovations(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (v, f) in self.innovations.iter().zip(&self.innovation_covs) {
            if v.is_empty() {
                continue;
            }
            if let Some(ch) = f.clone().cholesky() {
                if let Some(e) = ch.l().solve_lower_triangular(v) {
                    out.extend(e.iter());
                }
            }
        }
        out
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Kalman filter with missing observations.
///
/// A fully missing row copies the prediction unchanged; a partly missing row
/// updates on its observed subvector. The covariance update uses the Joseph
/// form followed by symmetrization.
pub fn kalman_filter(model: &StateSpaceModel, obs: &[Vec<Option<f64>>]) -> Result<FilterOutput> {
    let n = model.n_obs();
    let m = model.n_states();
    let len = obs.len();
    if let Some(cs) = &model.state_intercepts {
        if cs.len() < len {
            return Err(Error::Contract(format!("{} state intercepts for {len} periods", cs.len())));
        }
    }
    if let Some(ds) = &model.obs_intercepts {
        if ds.len() < len {
            return Err(Error::Contract(format!("{} observation intercepts for {len} periods", ds.len())));
        }
    }
    let rqr = model.state_cov();
    let tt = model.t.transpose();
    let eye = DMatrix::<f64>::identity(m, m);

    let mut out = FilterOutput {
        observed: Vec::with_capacity(len),
        innovations: Vec::with_capacity(len),
        innovation_covs: Vec::with_capacity(len),
        predicted_means: Vec::with_capacity(len),
        predicted_covs: Vec::with_capacity(len),
        filtered_means: Vec::with_capacity(len),
        filtered_covs: Vec::with_capacity(len),
        next_mean: DVector::zeros(m),
        next_cov: DMatrix::zeros(m, m),
        loglik: 0.0,
    };

    let mut a = model.a1.clone();
    let mut p = model.p1.clone();
    for (t, row) in obs.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!("observation row {t} has {} entries, model has {n}", row.len())));
        }
        let idx: Vec<usize> = (0..n).filter(|&i| row[i].is_some()).collect();
        if let Some(&i) = idx.iter().find(|&&i| !row[i].unwrap().is_finite()) {
            return Err(Error::Numeric(format!("non-finite observation at t={t}, series {i}")));
        }

        let (af, pf, v, f) = if idx.is_empty() {
            (a.clone(), p.clone(), DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let k = idx.len();
            let zo = model.z.select_rows(&idx);
            let d = model.obs_intercept(t);
            let ho = DMatrix::from_fn(k, k, |i, j| model.h[(idx[i], idx[j])]);
            let y = DVector::from_iterator(k, idx.iter().map(|&i| row[i].unwrap() - d[i]));
            let v = y - &zo * &a;
            let pz = &p * zo.transpose();
            let mut f = &zo * &pz + &ho;
            symmetrize(&mut f);
            let chol = f.clone().cholesky().ok_or_else(|| Error::Conditioning {
                t,
                msg: "innovation covariance is not positive definite".into(),
            })?;
            let l = chol.l_dirty();
            let scale = f.diagonal().amax();
            if (0..k).any(|i| !(l[(i, i)] * l[(i, i)] > 1e-13 * scale) || scale <= 0.0) {
                return Err(Error::Conditioning {
                    t,
                    msg: "innovation covariance is singular".into(),
                });
            }
            let log_det: f64 = (0..k).map(|i| 2.0 * l[(i, i)].ln()).sum();
            let finv_v = chol.solve(&v);
            let quad = v.dot(&finv_v);
            out.loglik += -0.5 * (k as f64 * (2.0 * PI).ln() + log_det + quad);

            let gain = chol.solve(&pz.transpose()).transpose();
            let af = &a + &gain * &v;
            let ikz = &eye - &gain * &zo;
            let mut pf = &ikz * &p * ikz.transpose() + &gain * &ho * gain.transpose();
            symmetrize(&mut pf);
            (af, pf, v, f)
        };

        let c = match &model.state_intercepts {
            Some(cs) if cs.len() > t + 1 => &cs[t + 1],
            _ => &model.c,
        };
        let a_next = &model.t * &af + c;
        let mut p_next = &model.t * &pf * &tt + &rqr;
        symmetrize(&mut p_next);

        out.observed.push(idx);
        out.innovations.push(v);
        out.innovation_covs.push(f);
        out.predicted_means.push(std::mem::replace(&mut a, a_next));
        out.predicted_covs.push(std::mem::replace(&mut p, p_next));
        out.filtered_means.push(af);
        out.filtered_covs.push(pf);
    }
    out.next_mean = a;
    out.next_cov = p;
    if !out.loglik.is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    Ok(out)
}

/// Prediction-error-decomposition log-likelihood over observed components.
pub fn loglikelihood(model: &StateSpaceModel, obs: &[Vec<Option<f64>>]) -> Result<f64> {
    kalman_filter(model, obs).map(|o| o.loglik)
}
