//! Empirical predictive densities: kernel density estimates, descriptive
//! statistics, the Jarque-Bera test and central intervals.

mod describe;
mod kde;

pub use describe::{
    chi2_2_upper_tail, describe, jarque_bera, jarque_bera_from_moments, skew_stars, DensityStats,
};
pub use kde::{kde, resolve_bandwidth, silverman_bandwidth, Bandwidth, FALLBACK_BANDWIDTH};

use serde::{Deserialize, Serialize};

use crate::calendar::Quarter;
use crate::dfm::GaussianDensity;
use crate::error::{Error, Result};
use crate::fredmd::InfoSetKind;

/// Where a set of predictive draws came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub quarter: Quarter,
    pub info_set: InfoSetKind,
}

/// Draws from a predictive distribution, in percent growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDensity {
    samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl EmpiricalDensity {
    /// At least two finite samples.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "an empirical density needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                index,
                msg: "non-finite sample".into(),
            });
        }
        Ok(Self {
            samples,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `a * s + b` to every sample.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        let mut out = Self::new(self.samples.iter().map(|s| a * s + b).collect())?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    /// (N-1)-normalized standard deviation.
    pub fn std(&self) -> f64 {
        std_unbiased(&self.samples)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Linear-interpolation quantile of the sorted samples.
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&sorted(&self.samples), p)
    }
}

/// Anything with a predictive mean and standard deviation.
pub trait PredictiveMoments {
    fn predictive_mean(&self) -> f64;
    fn predictive_std(&self) -> f64;
}

impl PredictiveMoments for EmpiricalDensity {
    fn predictive_mean(&self) -> f64 {
        self.mean()
    }

    fn predictive_std(&self) -> f64 {
        self.std()
    }
}

impl PredictiveMoments for GaussianDensity {
    fn predictive_mean(&self) -> f64 {
        self.mean
    }

    fn predictive_std(&self) -> f64 {
        self.std()
    }
}

/// `mean -/+ k std`; `k` must be positive.
pub fn interval(d: &impl PredictiveMoments, k: f64) -> Result<(f64, f64)> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Contract(format!("interval width multiplier {k} must be positive")));
    }
    let (m, s) = (d.predictive_mean(), d.predictive_std());
    Ok((m - k * s, m + k * s))
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn std_unbiased(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub(crate) fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub(crate) fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}
