use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Normal density nowcast in percent growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensity {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianDensity {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Contract(format!("invalid Gaussian N({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    fn normal(&self) -> Normal {
        Normal::new(self.mean, self.std()).expect("validated on construction")
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.normal().pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.normal().cdf(x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.normal().inverse_cdf(p)
    }

    /// `mean -/+ k std`.
    pub fn interval(&self, k: f64) -> (f64, f64) {
        (self.mean - k * self.std(), self.mean + k * self.std())
    }
}
