use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::filter::FilterOutput;
use super::model::StateSpaceModel;

/// Fixed-interval smoothed moments.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    /// `a_{t|T}`.
    pub means: Vec<DVector<f64>>,
    /// `P_{t|T}`.
    pub covs: Vec<DMatrix<f64>>,
    /// `Cov(a_t, a_{t-1} | Y_T)`; entry 0 is zero.
    pub lag_covs: Vec<DMatrix<f64>>,
}

/// Solves `P x = b` for symmetric PSD `P`, falling back to the
/// pseudo-inverse when `P` is singular.
fn psd_solve(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = p.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let pinv = p
        .clone()
        .pseudo_inverse(1e-12 * p.amax().max(1e-300))
        .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))?;
    Ok(pinv * b)
}

/// Rauch-Tung-Striebel smoother over a filter pass of `model`.
pub fn rts_smooth(model: &StateSpaceModel, filt: &FilterOutput) -> Result<SmootherOutput> {
    let len = filt.len();
    let m = model.n_states();
    if len == 0 {
        return Ok(SmootherOutput {
            means: vec![],
            covs: vec![],
            lag_covs: vec![],
        });
    }
    let mut means = filt.filtered_means.clone();
    let mut covs = filt.filtered_covs.clone();
    let mut lag_covs = vec![DMatrix::zeros(m, m); len];
    for t in (0..len - 1).rev() {
        let pf = &filt.filtered_covs[t];
        let pp = &filt.predicted_covs[t + 1];
        // J = P_{t|t} T' P_{t+1|t}^{-1}
        let j = psd_solve(pp, &(&model.t * pf))?.transpose();
        let a = &filt.filtered_means[t] + &j * (&means[t + 1] - &filt.predicted_means[t + 1]);
        let mut p = pf + &j * (&covs[t + 1] - pp) * j.transpose();
        p = (&p + p.transpose()) * 0.5;
        lag_covs[t + 1] = &covs[t + 1] * j.transpose();
        means[t] = a;
        covs[t] = p;
    }
    Ok(SmootherOutput { means, covs, lag_covs })
}
