use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::Quarter;
use crate::error::{Error, Result};
use crate::statespace::{fit_mle_from, OptimizerConfig, ParamMap, StateSpaceModel};

use super::density::GaussianDensity;
use super::factor::{DfmSpec, FactorScores};

/// Weights of the monthly-to-quarterly growth aggregation, applied to
/// `y_t, ..., y_t-4` and divided by 3.
pub const AGGREGATION_WEIGHTS: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];

/// `sum(w_k^2) / 9`.
pub const AGGREGATION_VARIANCE_FACTOR: f64 = 19.0 / 9.0;

/// Latent monthly growth `y_t = c + phi f_t + e_t`, `e_t ~ N(0, sigma2_eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub c: f64,
    pub phi: f64,
    pub sigma2_eps: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub n_quarters: usize,
}

/// `(1/3)(y_t + 2 y_t-1 + 3 y_t-2 + 2 y_t-3 + y_t-4)` for `ys = [y_t, ..., y_t-4]`.
pub fn aggregate(ys: &[f64; 5]) -> f64 {
    ys.iter().zip(AGGREGATION_WEIGHTS).map(|(y, w)| w * y).sum::<f64>() / 3.0
}

/// Factor values `[f_3q, f_3q-1, ..., f_3q-4]` for quarter `q`.
pub fn factor_window(scores: &FactorScores, q: Quarter) -> Result<[f64; 5]> {
    let end = q.last_month();
    let mut out = [0.0; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        let ym = end.add_months(-(k as i64));
        *slot = scores
            .get(ym)
            .ok_or_else(|| Error::Windowing(format!("no factor value for {ym}, needed by {q}")))?;
    }
    Ok(out)
}

/// Bridge state space: state `[y_t, ..., y_t-4]`, intercept
/// `c_t = (c + phi f_t, 0, 0, 0, 0)`, quarterly growth measured without
/// error through the aggregation weights.
pub fn bridge_model(c: f64, phi: f64, sigma2_eps: f64, factor: &[f64]) -> Result<StateSpaceModel> {
    let z = DMatrix::from_row_slice(1, 5, &AGGREGATION_WEIGHTS.map(|w| w / 3.0));
    let t = DMatrix::from_fn(5, 5, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
    let mut r = DMatrix::zeros(5, 1);
    r[(0, 0)] = 1.0;
    let q = DMatrix::from_element(1, 1, sigma2_eps);
    let f0 = factor.first().copied().unwrap_or(0.0);
    let a1 = DVector::from_element(5, c + phi * f0);
    let p1 = DMatrix::identity(5, 5) * sigma2_eps;
    let mut model = StateSpaceModel::new(z, DMatrix::zeros(1, 1), t, r, q, a1, p1)?;
    model.state_intercepts = Some(
        factor
            .iter()
            .map(|f| {
                let mut v = DVector::zeros(5);
                v[0] = c + phi * f;
                v
            })
            .collect(),
    );
    Ok(model)
}

struct BridgeTemplate<'a> {
    factor: &'a [f64],
    start: Vec<f64>,
}

impl ParamMap for BridgeTemplate<'_> {
    fn names(&self) -> Vec<String> {
        vec!["c".into(), "phi".into(), "log_sigma2_eps".into()]
    }

    fn initial(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn build(&self, theta: &[f64]) -> Result<StateSpaceModel> {
        bridge_model(theta[0], theta[1], theta[2].exp(), self.factor)
    }
}

/// Maximum-likelihood bridge fit of quarterly growth on the monthly factor.
/// Quarters without five months of factor history are skipped.
pub fn fit_bridge(scores: &FactorScores, target: &[(Quarter, f64)], cfg: &OptimizerConfig) -> Result<BridgeSpec> {
    let usable: Vec<(Quarter, f64, [f64; 5])> = target
        .iter()
        .filter_map(|&(q, y)| factor_window(scores, q).ok().map(|w| (q, y, w)))
        .collect();
    if usable.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "{} quarters with factor history for the bridge model",
            usable.len()
        )));
    }

    // OLS of quarterly growth on the aggregated factor
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|(_, _, w)| aggregate(w)).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, y, _)| *y).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let phi0 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b0 = my - phi0 * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - b0 - phi0 * x).powi(2)).sum();
    let s2 = (rss / (n - 2.0).max(1.0) / AGGREGATION_VARIANCE_FACTOR).max(1e-6);

    // monthly axis from the first needed factor month through the last target month
    let first = usable[0].0.last_month().add_months(-4);
    let last = usable.last().unwrap().0.last_month();
    let len = (last.months_since(first) + 1) as usize;
    let factor: Vec<f64> = (0..len)
        .map(|i| scores.get(first.add_months(i as i64)).unwrap_or(0.0))
        .collect();
    let mut obs = vec![vec![None]; len];
    for (q, y, _) in &usable {
        obs[q.last_month().months_since(first) as usize] = vec![Some(*y)];
    }

    let template = BridgeTemplate {
        factor: &factor,
        start: vec![b0 / 3.0, phi0, s2.ln()],
    };
    let fit = fit_mle_from(&template, &template.start, &obs, cfg)?;
    Ok(BridgeSpec {
        c: fit.theta[0],
        phi: fit.theta[1],
        sigma2_eps: fit.theta[2].exp(),
        loglik: fit.loglik,
        iterations: fit.iterations,
        n_quarters: usable.len(),
    })
}

/// `3c + (phi/3)(f_3q + 2 f_3q-1 + 3 f_3q-2 + 2 f_3q-3 + f_3q-4)`.
pub fn nowcast_mean(bridge: &BridgeSpec, scores: &FactorScores, q: Quarter) -> Result<f64> {
    let w = factor_window(scores, q)?;
    Ok(3.0 * bridge.c + bridge.phi * aggregate(&w))
}

/// `(19/9)(phi^2 Var(f) + sigma2_eps)`; the same for every quarter.
pub fn nowcast_variance(bridge: &BridgeSpec, dfm: &DfmSpec) -> Result<f64> {
    variance_from_parts(bridge.phi, dfm.factor_variance(), bridge.sigma2_eps)
}

pub fn variance_from_parts(phi: f64, factor_variance: f64, sigma2_eps: f64) -> Result<f64> {
    if !(sigma2_eps > 0.0) || !(factor_variance > 0.0) || !phi.is_finite() {
        return Err(Error::Contract(format!(
            "variance parameters must be positive (sigma2_eps = {sigma2_eps}, Var(f) = {factor_variance})"
        )));
    }
    Ok(AGGREGATION_VARIANCE_FACTOR * (phi * phi * factor_variance) + AGGREGATION_VARIANCE_FACTOR * sigma2_eps)
}

/// Gaussian density nowcast for quarter `q`.
pub fn density_nowcast_dfm(bridge: &BridgeSpec, dfm: &DfmSpec, scores: &FactorScores, q: Quarter) -> Result<GaussianDensity> {
    GaussianDensity::new(nowcast_mean(bridge, scores, q)?, nowcast_variance(bridge, dfm)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::YearMonth;
    use crate::statespace::kalman_filter;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn bridge(c: f64, phi: f64, s2: f64) -> BridgeSpec {
        BridgeSpec {
            c,
            phi,
            sigma2_eps: s2,
            loglik: 0.0,
            iterations: 0,
            n_quarters: 0,
        }
    }

    fn flat_scores(v: f64, months: usize) -> FactorScores {
        FactorScores {
            first: YearMonth::new(2000, 1).unwrap(),
            values: vec![v; months],
        }
    }

    #[test]
    fn unit_factor_mean_with_reference_coefficients() {
        let q = Quarter::new(2001, 2).unwrap();
        let m = nowcast_mean(&bridge(0.228, 0.372, 0.211), &flat_scores(1.0, 24), q).unwrap();
        // 3(0.228) + (1/3)(0.372)(9)
        assert!((m - 1.800).abs() < 1e-12);
    }

    #[test]
    fn zero_factor_or_zero_phi_gives_three_c() {
        let q = Quarter::new(2001, 2).unwrap();
        let b = bridge(0.25, 0.4, 0.2);
        assert_eq!(nowcast_mean(&b, &flat_scores(0.0, 24), q).unwrap(), 0.75);
        assert_eq!(nowcast_mean(&bridge(0.25, 0.0, 0.2), &flat_scores(3.3, 24), q).unwrap(), 0.75);
    }

    #[test]
    fn reference_variance() {
        let v = variance_from_parts(0.372, 1.0, 0.211).unwrap();
        let expected = 19.0 / 9.0 * (0.372f64.powi(2) + 0.211);
        assert_eq!(v, expected);
        assert!((v - 0.7376).abs() < 1e-4);
        assert_eq!(variance_from_parts(0.0, 1.0, 0.3).unwrap(), 19.0 / 9.0 * 0.3);
    }

    #[test]
    fn doubling_sigma2_adds_its_scaled_value() {
        let a = variance_from_parts(0.4, 1.7, 0.2).unwrap();
        let b = variance_from_parts(0.4, 1.7, 0.4).unwrap();
        assert!((b - a - 19.0 / 9.0 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_variance_parameter_is_contract_error() {
        assert!(matches!(variance_from_parts(0.4, 1.0, 0.0), Err(Error::Contract(_))));
        assert!(matches!(variance_from_parts(0.4, -1.0, 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn short_factor_history_is_windowing_error() {
        let q = Quarter::new(2000, 1).unwrap();
        assert!(matches!(
            nowcast_mean(&bridge(0.1, 0.1, 0.1), &flat_scores(1.0, 24), q),
            Err(Error::Windowing(_))
        ));
    }

    #[test]
    fn constant_monthly_growth_aggregates_to_three_times() {
        assert_eq!(aggregate(&[0.5; 5]), 3.0 * 0.5);
    }

    #[test]
    fn bridge_measurement_applies_aggregation_weights() {
        let model = bridge_model(0.0, 0.0, 1.0, &[0.0; 3]).unwrap();
        let state = DVector::from_row_slice(&[1.0, -2.0, 0.5, 4.0, 3.0]);
        let y = (&model.z * &state)[0];
        assert!((y - aggregate(&[1.0, -2.0, 0.5, 4.0, 3.0])).abs() < 1e-15);
    }

    #[test]
    fn filter_one_step_mean_matches_closed_form_without_past_data() {
        // with no earlier measurements the filter's prediction of the first
        // quarterly observation is the closed-form conditional mean
        let factor: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let (c, phi) = (0.3, 0.5);
        let model = bridge_model(c, phi, 0.2, &factor).unwrap();
        let mut obs = vec![vec![None]; 9];
        obs[8] = vec![Some(1.0)];
        let out = kalman_filter(&model, &obs).unwrap();
        let pred = (&model.z * &out.predicted_means[8])[0];
        let w = [factor[8], factor[7], factor[6], factor[5], factor[4]];
        assert!((pred - (3.0 * c + phi * aggregate(&w))).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_simulated_bridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let months = 3 * 240;
        let mut f = vec![0.0; months];
        for t in 1..months {
            f[t] = 0.6 * f[t - 1] + z();
        }
        let (c, phi, s2): (f64, f64, f64) = (0.25, 0.35, 0.2);
        let ym: Vec<f64> = f.iter().map(|ft| c + phi * ft + s2.sqrt() * z()).collect();
        let scores = FactorScores {
            first: YearMonth::new(1960, 1).unwrap(),
            values: f,
        };
        let target: Vec<(Quarter, f64)> = (2..240)
            .map(|k| {
                let t = 3 * k + 2;
                let w = [ym[t], ym[t - 1], ym[t - 2], ym[t - 3], ym[t - 4]];
                (Quarter::new(1960, 1).unwrap().add(k as i64), aggregate(&w))
            })
            .collect();
        let b = fit_bridge(&scores, &target, &OptimizerConfig::default()).unwrap();
        assert!((b.c - c).abs() < 0.05, "c = {}", b.c);
        assert!((b.phi - phi).abs() < 0.05, "phi = {}", b.phi);
        assert!((b.sigma2_eps - s2).abs() < 0.08, "s2 = {}", b.sigma2_eps);
    }

    proptest! {
        #[test]
        fn mean_is_affine_in_factor(fs in prop::array::uniform5(-5.0f64..5.0), c in -1.0f64..1.0, phi in -2.0f64..2.0) {
            let q = Quarter::new(2001, 2).unwrap();
            let mut scores = flat_scores(0.0, 24);
            let end = q.last_month().months_since(scores.first) as usize;
            for k in 0..5 {
                scores.values[end - k] = fs[k];
            }
            let m = nowcast_mean(&bridge(c, phi, 0.1), &scores, q).unwrap();
            let expected = 3.0 * c + phi / 3.0 * (fs[0] + 2.0 * fs[1] + 3.0 * fs[2] + 2.0 * fs[3] + fs[4]);
            prop_assert!((m - expected).abs() < 1e-12);
        }

        #[test]
        fn aggregation_identity(ys in prop::array::uniform5(-10.0f64..10.0)) {
            let model = bridge_model(0.0, 0.0, 1.0, &[0.0]).unwrap();
            let y = (&model.z * DVector::from_row_slice(&ys))[0];
            let direct = (ys[0] + 2.0 * ys[1] + 3.0 * ys[2] + 2.0 * ys[3] + ys[4]) / 3.0;
            prop_assert!((y - direct).abs() < 1e-12);
        }
    }
}
