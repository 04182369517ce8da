use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calendar::Quarter;
use crate::dfm::GaussianDensity;
use crate::error::{Error, Result};
use crate::fredmd::InfoSetKind;

use super::record::{Engine, NowcastRecord};

/// Floor on the naive variance when the history is constant.
pub const NAIVE_MIN_VARIANCE: f64 = 1e-12;

/// Minimum history for the naive benchmark.
pub const NAIVE_MIN_QUARTERS: usize = 8;

/// Minimum sample for the Diebold-Mariano test.
pub const DM_MIN_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NaiveVariant {
    /// Mean growth over the history.
    #[default]
    Mean,
    /// Most recent growth carried forward.
    Last,
}

/// Gaussian benchmark with the history's (N-1) variance; the location is
/// the history mean or, for [`NaiveVariant::Last`], its final value.
pub fn naive_nowcast(history: &[f64], variant: NaiveVariant) -> Result<GaussianDensity> {
    if history.len() < NAIVE_MIN_QUARTERS {
        return Err(Error::InsufficientData(format!(
            "naive benchmark needs {NAIVE_MIN_QUARTERS} quarters, got {}",
            history.len()
        )));
    }
    naive_from(history, variant)
}

fn naive_from(history: &[f64], variant: NaiveVariant) -> Result<GaussianDensity> {
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let loc = match variant {
        NaiveVariant::Mean => mean,
        NaiveVariant::Last => *history.last().unwrap(),
    };
    GaussianDensity::new(loc, var.max(NAIVE_MIN_VARIANCE))
}

/// `(RMSE, MAE)` of point errors.
pub fn rmse_mae(errors: &[f64]) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::InsufficientData("no forecast errors".into()));
    }
    let n = errors.len() as f64;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    Ok((mse.sqrt(), mae))
}

/// Diebold-Mariano test of `H0: E[d] = 0` against `H1: E[d] < 0` with
/// `d_t = loss_a,t - loss_b,t` (a more accurate than b). Long-run variance
/// at lag 0 (population variance of `d`). Returns `(stat, p)`.
pub fn diebold_mariano(loss_a: &[f64], loss_b: &[f64]) -> Result<(f64, f64)> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Shape(format!("loss series of length {} and {}", loss_a.len(), loss_b.len())));
    }
    if loss_a.len() < DM_MIN_LEN {
        return Err(Error::InsufficientData(format!(
            "Diebold-Mariano needs {DM_MIN_LEN} pairs, got {}",
            loss_a.len()
        )));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let t = d.len() as f64;
    let mean = d.iter().sum::<f64>() / t;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
    if d.iter().all(|&v| v == 0.0) {
        return Ok((0.0, 0.5));
    }
    if !(var > 0.0) {
        return Err(Error::Degenerate("loss differential has zero variance".into()));
    }
    let stat = mean / (var / t).sqrt();
    Ok((stat, std_normal_cdf(stat)))
}

fn std_normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

/// `*`, `**`, `***` for one-sided p below 10%, 5%, 1%.
pub fn dm_stars(p: f64) -> &'static str {
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

/// Accuracy of one engine under one information set. Relative entries and
/// p-values are `None` when the benchmark is absent or the test undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub engine: Engine,
    pub info_set: InfoSetKind,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub rel_rmse_naive: Option<f64>,
    pub rel_mae_naive: Option<f64>,
    pub rel_rmse_dfm: Option<f64>,
    pub rel_mae_dfm: Option<f64>,
    /// Squared-loss test against the naive benchmark.
    pub dm_p_naive_sq: Option<f64>,
    /// Absolute-loss test against the naive benchmark.
    pub dm_p_naive_abs: Option<f64>,
    pub dm_p_dfm_sq: Option<f64>,
    pub dm_p_dfm_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "engine",
    "info_set",
    "n",
    "rmse",
    "mae",
    "rel_rmse_naive",
    "rel_mae_naive",
    "rel_rmse_dfm",
    "rel_mae_dfm",
    "dm_p_naive_sq",
    "dm_p_naive_abs",
    "dm_p_dfm_sq",
    "dm_p_dfm_abs",
];

impl MetricsTable {
    pub fn get(&self, engine: Engine, info_set: InfoSetKind) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.engine == engine && r.info_set == info_set)
    }
}

type ErrorMap = BTreeMap<Quarter, f64>;

/// Paired errors on the quarters both maps cover.
fn paired(a: &ErrorMap, b: &ErrorMap) -> (Vec<f64>, Vec<f64>) {
    a.iter().filter_map(|(q, ea)| b.get(q).map(|eb| (*ea, *eb))).unzip()
}

fn relative(a: &ErrorMap, b: &ErrorMap) -> Option<(f64, f64, Option<f64>, Option<f64>)> {
    let (ea, eb) = paired(a, b);
    let (ra, ma) = rmse_mae(&ea).ok()?;
    let (rb, mb) = rmse_mae(&eb).ok()?;
    let sq = |e: &[f64]| e.iter().map(|v| v * v).collect::<Vec<_>>();
    let ab = |e: &[f64]| e.iter().map(|v| v.abs()).collect::<Vec<_>>();
    let p_sq = diebold_mariano(&sq(&ea), &sq(&eb)).ok().map(|x| x.1);
    let p_abs = diebold_mariano(&ab(&ea), &ab(&eb)).ok().map(|x| x.1);
    Some((ra / rb, ma / mb, p_sq, p_abs))
}

/// Metrics per engine and information set over records with actuals.
/// Relative metrics compare on the quarters both engines nowcast.
pub fn compute_metrics(records: &[NowcastRecord]) -> Result<MetricsTable> {
    let mut errors: BTreeMap<(Engine, InfoSetKind), ErrorMap> = BTreeMap::new();
    for r in records {
        let entry = errors.entry((r.engine, r.info_set)).or_default();
        if let Some(e) = r.error_value() {
            entry.insert(r.quarter, e);
        }
    }
    if errors.values().all(BTreeMap::is_empty) {
        return Err(Error::InsufficientData("no records with both a nowcast and an actual".into()));
    }
    let empty = ErrorMap::new();
    let mut rows = Vec::new();
    for (&(engine, info_set), errs) in &errors {
        let values: Vec<f64> = errs.values().copied().collect();
        let Ok((rmse, mae)) = rmse_mae(&values) else { continue };
        let vs = |other: Engine| {
            if other == engine {
                return None;
            }
            relative(errs, errors.get(&(other, info_set)).unwrap_or(&empty))
        };
        let naive = vs(Engine::Naive);
        let dfm = vs(Engine::Dfm);
        rows.push(MetricsRow {
            engine,
            info_set,
            n: values.len(),
            rmse,
            mae,
            rel_rmse_naive: naive.map(|x| x.0),
            rel_mae_naive: naive.map(|x| x.1),
            rel_rmse_dfm: dfm.map(|x| x.0),
            rel_mae_dfm: dfm.map(|x| x.1),
            dm_p_naive_sq: naive.and_then(|x| x.2),
            dm_p_naive_abs: naive.and_then(|x| x.3),
            dm_p_dfm_sq: dfm.and_then(|x| x.2),
            dm_p_dfm_abs: dfm.and_then(|x| x.3),
        });
    }
    Ok(MetricsTable { rows })
}
