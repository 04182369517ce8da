use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{Quarter, YearMonth};
use crate::dfm::GaussianDensity;
use crate::error::{Error, Result};
use crate::fredmd::InfoSetKind;
use crate::stats::EmpiricalDensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Dfm,
    Bbb,
    #[serde(rename = "mcdropout", alias = "mcd")]
    McDropout,
    Naive,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Dfm, Engine::Bbb, Engine::McDropout, Engine::Naive];

    pub fn code(self) -> u64 {
        match self {
            Engine::Dfm => 1,
            Engine::Bbb => 2,
            Engine::McDropout => 3,
            Engine::Naive => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Dfm => "dfm",
            Engine::Bbb => "bbb",
            Engine::McDropout => "mcdropout",
            Engine::Naive => "naive",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, Engine::Bbb | Engine::McDropout)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dfm" => Ok(Engine::Dfm),
            "bbb" => Ok(Engine::Bbb),
            "mcd" | "mcdropout" | "mc_dropout" => Ok(Engine::McDropout),
            "naive" => Ok(Engine::Naive),
            other => Err(Error::Config(format!("unknown engine '{other}'"))),
        }
    }
}

/// A predictive density nowcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Density {
    Gaussian(GaussianDensity),
    Empirical(EmpiricalDensity),
}

impl Density {
    pub fn mean(&self) -> f64 {
        match self {
            Density::Gaussian(g) => g.mean,
            Density::Empirical(e) => e.mean(),
        }
    }

    pub fn median(&self) -> f64 {
        match self {
            Density::Gaussian(g) => g.mean,
            Density::Empirical(e) => e.median(),
        }
    }

    pub fn std(&self) -> f64 {
        match self {
            Density::Gaussian(g) => g.std(),
            Density::Empirical(e) => e.std(),
        }
    }

    /// `mean -/+ k std`.
    pub fn interval(&self, k: f64) -> Result<(f64, f64)> {
        match self {
            Density::Gaussian(g) => crate::stats::interval(g, k),
            Density::Empirical(e) => crate::stats::interval(e, k),
        }
    }
}

/// One engine's nowcast of one quarter under one information set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NowcastRecord {
    pub quarter: Quarter,
    pub info_set: InfoSetKind,
    pub engine: Engine,
    /// `None` when the engine failed; see `error`.
    pub density: Option<Density>,
    pub point_mean: Option<f64>,
    pub point_median: Option<f64>,
    pub actual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Last quarter of the training window.
    pub train_end: Quarter,
    /// Last quarter whose target entered the fit (training or validation).
    pub fit_end: Quarter,
    pub seed: u64,
    /// Last month of regressor data the nowcast conditions on.
    #[serde(default)]
    pub cutoff: Option<YearMonth>,
    /// Engine-specific diagnostics.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub diagnostics: serde_json::Value,
}

impl NowcastRecord {
    pub fn new(quarter: Quarter, info_set: InfoSetKind, engine: Engine, density: Density) -> Self {
        Self {
            quarter,
            info_set,
            engine,
            point_mean: Some(density.mean()),
            point_median: Some(density.median()),
            density: Some(density),
            actual: None,
            error: None,
            train_end: quarter,
            fit_end: quarter,
            seed: 0,
            cutoff: None,
            diagnostics: serde_json::Value::Null,
        }
    }

    pub fn failed(quarter: Quarter, info_set: InfoSetKind, engine: Engine, err: &Error) -> Self {
        Self {
            quarter,
            info_set,
            engine,
            density: None,
            point_mean: None,
            point_median: None,
            actual: None,
            error: Some(err.to_string()),
            train_end: quarter,
            fit_end: quarter,
            seed: 0,
            cutoff: None,
            diagnostics: serde_json::Value::Null,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.density.is_some()
    }

    /// Point error `mean - actual`, when both exist.
    pub fn error_value(&self) -> Option<f64> {
        Some(self.point_mean? - self.actual?)
    }
}

/// Stable ordering: engine, information set, quarter.
pub fn sort_records(records: &mut [NowcastRecord]) {
    records.sort_by_key(|a| (a.engine, a.info_set, a.quarter));
}
