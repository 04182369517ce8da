use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{mean, quantile_sorted, sorted};

/// Smallest sample for stable higher moments.
pub const MIN_DESCRIBE_SAMPLES: usize = 8;

/// Summary of a predictive density, serialized with table-style names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    #[serde(rename = "Mean")]
    pub mean: f64,
    #[serde(rename = "Median")]
    pub median: f64,
    /// (N-1)-normalized.
    #[serde(rename = "Standard dev.")]
    pub std: f64,
    /// Adjusted Fisher-Pearson `G1 = g1 sqrt(n(n-1)) / (n-2)`.
    #[serde(rename = "Skew")]
    pub skew: f64,
    #[serde(rename = "Skew significance")]
    pub skew_stars: String,
    /// Adjusted excess kurtosis `G2 = ((n+1) g2 + 6)(n-1) / ((n-2)(n-3))`.
    #[serde(rename = "Kurtosis")]
    pub kurtosis: f64,
    #[serde(rename = "Jarque-Bera test")]
    pub jb_stat: f64,
    #[serde(rename = "Jarque-Bera p-value")]
    pub jb_pvalue: f64,
    #[serde(rename = "Jarque-Bera significance")]
    pub jb_stars: String,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Central moments `(m2, m3, m4)` with divisor n.
fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Biased sample skewness and excess kurtosis `(g1, g2)`.
fn biased_shape(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < MIN_DESCRIBE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "higher moments need at least {MIN_DESCRIBE_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    let (m2, m3, m4) = central_moments(x);
    let scale = mean(x).abs().max(1.0);
    if !(m2 > (1e-14 * scale).powi(2)) {
        return Err(Error::Degenerate("zero variance: skew and kurtosis are undefined".into()));
    }
    Ok((m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
}

/// Upper tail of the chi-square distribution with two degrees of freedom.
pub fn chi2_2_upper_tail(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        (-0.5 * x).exp()
    }
}

/// `(n/6)(S^2 + K^2/4)` and its chi-square(2) p-value.
pub fn jarque_bera_from_moments(n: usize, skew: f64, excess_kurtosis: f64) -> (f64, f64) {
    let jb = n as f64 / 6.0 * (skew * skew + excess_kurtosis * excess_kurtosis / 4.0);
    (jb, chi2_2_upper_tail(jb))
}

/// Jarque-Bera statistic from the biased sample skewness and excess
/// kurtosis, with its chi-square(2) p-value.
pub fn jarque_bera(samples: &[f64]) -> Result<(f64, f64)> {
    let (g1, g2) = biased_shape(samples)?;
    Ok(jarque_bera_from_moments(samples.len(), g1, g2))
}

/// Stars for 10/5/1% two-sided significance of `skew` against the
/// large-sample standard error `sqrt(6/n)`.
pub fn skew_stars(skew: f64, n: usize) -> &'static str {
    let z = skew.abs() / (6.0 / n as f64).sqrt();
    stars_from_p(2.0 * (1.0 - std_normal_cdf(z)))
}

fn stars_from_p(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

/// Descriptive statistics of at least eight samples.
pub fn describe(samples: &[f64]) -> Result<DensityStats> {
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain {
            index,
            msg: "non-finite sample".into(),
        });
    }
    let (g1, g2) = biased_shape(samples)?;
    let n = samples.len();
    let nf = n as f64;
    let skew = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    let kurtosis = ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
    let (jb_stat, jb_pvalue) = jarque_bera_from_moments(n, g1, g2);
    let s = sorted(samples);
    Ok(DensityStats {
        mean: mean(samples),
        median: quantile_sorted(&s, 0.5),
        std: super::std_unbiased(samples),
        skew,
        skew_stars: skew_stars(skew, n).into(),
        kurtosis,
        jb_stat,
        jb_pvalue,
        jb_stars: stars_from_p(jb_pvalue).into(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Biased (g1, g2) recovered from adjusted (G1, G2).
    fn biased_from_adjusted(n: f64, g1_adj: f64, g2_adj: f64) -> (f64, f64) {
        let g1 = g1_adj * (n - 2.0) / (n * (n - 1.0)).sqrt();
        let g2 = (g2_adj * (n - 2.0) * (n - 3.0) / (n - 1.0) - 6.0) / (n + 1.0);
        (g1, g2)
    }

    #[test]
    fn symmetric_samples_have_zero_skew() {
        let s = [-2.0, -1.0, 0.0, 1.0, 2.0, -0.5, 0.5, 3.0, -3.0];
        let d = describe(&s).unwrap();
        assert!(d.skew.abs() < 1e-12);
        assert!((d.median - d.mean).abs() < 1e-12);
    }

    #[test]
    fn adjusted_estimators_match_closed_forms() {
        // oracle: k-statistics k2, k3, k4 give G1 = k3 / k2^1.5 and G2 = k4 / k2^2
        let s = [0.3, -1.2, 2.5, 0.9, 1.1, -0.4, 3.3, 0.0, 0.7, -2.1];
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        let (s2, s3, s4) = s.iter().fold((0.0, 0.0, 0.0), |(a, b, c), v| {
            let d = v - m;
            (a + d * d, b + d * d * d, c + d * d * d * d)
        });
        let k2 = s2 / (n - 1.0);
        let k3 = n * s3 / ((n - 1.0) * (n - 2.0));
        let k4 = n * ((n + 1.0) * s4 - 3.0 * (n - 1.0) * s2 * s2 / n) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
        let d = describe(&s).unwrap();
        assert!((d.skew - k3 / k2.powf(1.5)).abs() < 1e-12);
        assert!((d.kurtosis - k4 / (k2 * k2)).abs() < 1e-12);
        assert!((d.std - k2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normal_kurtosis_near_zero() {
        let d = describe(&normal_draws(10_000, 3)).unwrap();
        assert!(d.kurtosis.abs() < 0.1, "{}", d.kurtosis);
    }

    #[test]
    fn null_moments_give_zero_statistic() {
        assert_eq!(jarque_bera_from_moments(100, 0.0, 0.0), (0.0, 1.0));
    }

    #[test]
    fn moment_form_arithmetic() {
        let (jb, _) = jarque_bera_from_moments(100, -0.597, 0.160);
        assert!((jb - 6.0468).abs() < 1e-3);
    }

    #[test]
    fn reported_table_rows_reproduce() {
        // (skew, kurtosis, JB, skew stars, JB stars) for n = 100
        #[allow(clippy::approx_constant)]
        let rows = [
            (-0.044, -0.296, 0.516, "", ""),
            (-0.240, -0.388, 1.698, "", ""),
            (-0.423, 0.522, 3.684, "*", ""),
            (0.018, 0.422, 0.493, "", ""),
            (-0.219, -0.480, 1.881, "", ""),
            (0.061, -0.160, 0.247, "", ""),
            (-0.428, 0.282, 3.140, "*", ""),
            (0.718, 0.171, 8.390, "***", "**"),
            (-0.356, -0.534, 3.384, "", ""),
            (0.645, 0.606, 7.833, "***", "**"),
            (-0.597, 0.160, 5.796, "**", "*"),
            (0.566, -0.093, 5.274, "**", "*"),
        ];
        for (s, k, jb_ref, sstars, jstars) in rows {
            let (g1, g2) = biased_from_adjusted(100.0, s, k);
            let (jb, p) = jarque_bera_from_moments(100, g1, g2);
            assert!((jb - jb_ref).abs() < 0.02, "({s}, {k}): {jb} vs {jb_ref}");
            assert_eq!(skew_stars(s, 100), sstars, "skew {s}");
            assert_eq!(stars_from_p(p), jstars, "JB {jb_ref}");
        }
    }

    #[test]
    fn chi2_two_tail_at_five_percent_point() {
        assert!((chi2_2_upper_tail(5.991) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn null_calibration() {
        let rejections = (0..1000)
            .filter(|&i| jarque_bera(&normal_draws(100, 1000 + i)).unwrap().1 < 0.05)
            .count();
        let rate = rejections as f64 / 1000.0;
        assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert!(matches!(describe(&[1.0; 10]), Err(Error::Degenerate(_))));
        assert!(matches!(describe(&[1.0, 2.0, 3.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn json_uses_table_names() {
        let v = serde_json::to_value(describe(&normal_draws(50, 1)).unwrap()).unwrap();
        for key in ["Mean", "Median", "Standard dev.", "Skew", "Kurtosis", "Jarque-Bera test"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn affine_equivariance(seed in 0u64..1000, a in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64], b in -10.0..10.0f64) {
            let s = normal_draws(40, seed);
            let t: Vec<f64> = s.iter().map(|v| a * v + b).collect();
            let (d, e) = (describe(&s).unwrap(), describe(&t).unwrap());
            prop_assert!((e.mean - (a * d.mean + b)).abs() < 1e-9);
            prop_assert!((e.std - a.abs() * d.std).abs() < 1e-9);
            prop_assert!((e.skew - a.signum() * d.skew).abs() < 1e-8);
            prop_assert!((e.kurtosis - d.kurtosis).abs() < 1e-8);
        }

        #[test]
        fn symmetric_median_equals_mean(half in prop::collection::vec(-100.0..100.0f64, 4..30), c in -5.0..5.0f64) {
            let mut s: Vec<f64> = half.iter().map(|v| c + v).collect();
            s.extend(half.iter().map(|v| c - v));
            let d = describe(&s).unwrap();
            prop_assert!((d.median - d.mean).abs() < 1e-12 * (1.0 + d.std));
            prop_assert!(d.jb_stat >= 0.0 && (0.0..=1.0).contains(&d.jb_pvalue));
        }
    }
}
