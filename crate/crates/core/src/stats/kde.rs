use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{quantile_sorted, sorted, std_unbiased};

/// Bandwidth used when the samples have no spread.
pub const FALLBACK_BANDWIDTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Silverman's rule of thumb.
    #[default]
    Auto,
    Fixed(f64),
}

/// `0.9 min(std, IQR / 1.34) n^(-1/5)`; `None` when that is not positive.
pub fn silverman_bandwidth(samples: &[f64]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let s = sorted(samples);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let sd = std_unbiased(samples);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (samples.len() as f64).powf(-0.2);
    (h > 0.0 && h.is_finite()).then_some(h)
}

/// The bandwidth actually used for `bw`.
pub fn resolve_bandwidth(samples: &[f64], bw: Bandwidth) -> Result<f64> {
    match bw {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(h) => Err(Error::Contract(format!("bandwidth {h} must be positive"))),
        Bandwidth::Auto => Ok(silverman_bandwidth(samples).unwrap_or_else(|| {
            log::warn!("samples have no spread; using KDE bandwidth {FALLBACK_BANDWIDTH}");
            FALLBACK_BANDWIDTH
        })),
    }
}

/// Gaussian kernel density estimate `(1/(n h)) sum phi((y - s_i) / h)` on `grid`.
pub fn kde(samples: &[f64], grid: &[f64], bw: Bandwidth) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("kernel density of no samples".into()));
    }
    let h = resolve_bandwidth(samples, bw)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&y| {
            norm * samples
                .iter()
                .map(|&s| {
                    let u = (y - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect())
}
