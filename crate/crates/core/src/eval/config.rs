use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbb::BbbConfig;
use crate::calendar::{Quarter, Timeline, YearMonth};
use crate::dfm::DfmConfig;
use crate::error::{Error, Result};
use crate::fredmd::{GdpColumn, InfoSetKind};
use crate::nn::{Architecture, TrainConfig};
use crate::statespace::OptimizerConfig;

use super::metrics::NaiveVariant;
use super::record::Engine;

/// Keys that must be present in every run configuration.
pub const REQUIRED_KEYS: [&str; 7] = [
    "data.source",
    "windows.train_quarters",
    "windows.validation_quarters",
    "windows.eval_start",
    "windows.eval_quarters",
    "seeds.global",
    "output.dir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Fixture,
    Fredmd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataKind,
    #[serde(default = "default_fixture_seed")]
    pub fixture_seed: u64,
    #[serde(default = "default_source_url")]
    pub source_url: String,
    /// Vintage cache; `DENSECAST_CACHE` overrides it.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub gdp_csv: Option<PathBuf>,
    #[serde(default = "default_gdp_url")]
    pub gdp_url: String,
    #[serde(default = "default_gdp_column")]
    pub gdp_column: GdpColumn,
    /// First month of the first quarter of the monthly index.
    #[serde(default = "default_origin")]
    pub timeline_origin: YearMonth,
}

fn default_fixture_seed() -> u64 {
    7
}

fn default_source_url() -> String {
    "https://files.stlouisfed.org/files/htdocs/fred-md/monthly".into()
}

fn default_gdp_url() -> String {
    "https://fred.stlouisfed.org/graph/fredgraph.csv?id=GDPC1".into()
}

fn default_gdp_column() -> GdpColumn {
    GdpColumn::Levels
}

fn default_origin() -> YearMonth {
    YearMonth { year: 1959, month: 1 }
}

/// Neural-engine settings shared by both Bayesian variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnginesConfig {
    #[serde(default = "default_engines")]
    pub list: Vec<Engine>,
    #[serde(default = "default_info_sets")]
    pub info_sets: Vec<InfoSetKind>,
    /// Months per regressor window.
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default)]
    pub naive: NaiveVariant,
    #[serde(default)]
    pub arch: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bbb: BbbSettings,
    /// Predictive draws of the dropout engine.
    #[serde(default = "default_draws")]
    pub mcdropout_draws: usize,
    #[serde(default)]
    pub dfm: DfmSettings,
}

fn default_engines() -> Vec<Engine> {
    Engine::ALL.to_vec()
}

fn default_info_sets() -> Vec<InfoSetKind> {
    InfoSetKind::ALL.to_vec()
}

fn default_seq_len() -> usize {
    12
}

fn default_draws() -> usize {
    100
}

impl Default for EnginesConfig {
    fn default() -> Self {
        Self {
            list: default_engines(),
            info_sets: default_info_sets(),
            seq_len: default_seq_len(),
            naive: NaiveVariant::default(),
            arch: Architecture::default(),
            train: TrainConfig::default(),
            bbb: BbbSettings::default(),
            mcdropout_draws: default_draws(),
            dfm: DfmSettings::default(),
        }
    }
}

/// Variational settings; training knobs come from `engines.train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbbSettings {
    pub prior_sigma: f64,
    pub rho_init: f64,
    pub n_train_samples: usize,
    pub val_draws: usize,
    pub n_predict: usize,
}

impl Default for BbbSettings {
    fn default() -> Self {
        let d = BbbConfig::default();
        Self {
            prior_sigma: d.prior_sigma,
            rho_init: d.rho_init,
            n_train_samples: d.n_train_samples,
            val_draws: d.val_draws,
            n_predict: d.n_predict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfmSettings {
    pub max_em_iter: usize,
    pub em_tol: f64,
    pub refine_max_iter: usize,
    pub bridge_max_iter: usize,
}

impl Default for DfmSettings {
    fn default() -> Self {
        let d = DfmConfig::default();
        Self {
            max_em_iter: d.max_em_iter,
            em_tol: d.em_tol,
            refine_max_iter: d.refine.max_iter,
            bridge_max_iter: OptimizerConfig::default().max_iter,
        }
    }
}

impl DfmSettings {
    pub fn dfm_config(&self) -> DfmConfig {
        let d = DfmConfig::default();
        DfmConfig {
            max_em_iter: self.max_em_iter,
            em_tol: self.em_tol,
            refine: OptimizerConfig {
                max_iter: self.refine_max_iter,
                ..d.refine
            },
        }
    }

    pub fn bridge_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iter: self.bridge_max_iter,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Training sequences per window.
    pub train_quarters: usize,
    /// Quarters after the training window used for early stopping and
    /// included in the bridge fit.
    pub validation_quarters: usize,
    pub eval_start: Quarter,
    pub eval_quarters: usize,
}

impl WindowConfig {
    pub fn eval_quarters(&self) -> Vec<Quarter> {
        (0..self.eval_quarters as i64).map(|i| self.eval_start.add(i)).collect()
    }

    /// `(train_start, val_start)` for evaluation quarter `q`; the windows
    /// are `[train_start, val_start)` and `[val_start, q)`.
    pub fn windows(&self, q: Quarter) -> (Quarter, Quarter) {
        let val_start = q.add(-(self.validation_quarters as i64));
        (val_start.add(-(self.train_quarters as i64)), val_start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub global: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default)]
    pub save_checkpoints: bool,
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub engines: EnginesConfig,
    pub windows: WindowConfig,
    pub seeds: SeedConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for key in REQUIRED_KEYS {
            let mut node = Some(&value);
            for part in key.split('.') {
                node = node.and_then(|n| n.get(part));
            }
            if node.is_none() {
                return Err(Error::Config(format!("missing key `{key}`")));
            }
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("`{key}`: {msg}")));
        if self.windows.train_quarters < 8 {
            return bad("windows.train_quarters", format!("{} is below 8", self.windows.train_quarters));
        }
        if self.windows.validation_quarters == 0 {
            return bad("windows.validation_quarters", "must be at least 1".into());
        }
        if self.windows.eval_quarters == 0 {
            return bad("windows.eval_quarters", "must be at least 1".into());
        }
        if self.engines.list.is_empty() {
            return bad("engines.list", "no engines selected".into());
        }
        if self.engines.info_sets.is_empty() {
            return bad("engines.info_sets", "no information sets selected".into());
        }
        if self.engines.seq_len == 0 {
            return bad("engines.seq_len", "must be positive".into());
        }
        if self.engines.mcdropout_draws < 2 || self.engines.bbb.n_predict < 2 {
            return bad("engines.mcdropout_draws", "predictive densities need at least 2 draws".into());
        }
        if !(0.0..1.0).contains(&self.engines.arch.dropout) {
            return bad("engines.arch.dropout", format!("{} outside [0, 1)", self.engines.arch.dropout));
        }
        if self.engines.list.contains(&Engine::McDropout) && self.engines.arch.dropout == 0.0 {
            log::warn!("dropout engine selected with dropout 0: its densities will be degenerate");
        }
        if !(self.engines.bbb.prior_sigma > 0.0) {
            return bad("engines.bbb.prior_sigma", "must be positive".into());
        }
        self.engines.train.validate().map_err(|e| Error::Config(format!("`engines.train`: {e}")))?;
        Timeline::new(self.data.timeline_origin)
            .map_err(|e| Error::Config(format!("`data.timeline_origin`: {e}")))?;
        Ok(())
    }

    pub fn timeline(&self) -> Timeline {
        Timeline::new(self.data.timeline_origin).expect("validated origin")
    }

    /// Variational settings with the shared training knobs.
    pub fn bbb_config(&self) -> BbbConfig {
        let b = &self.engines.bbb;
        BbbConfig {
            train: self.engines.train.clone(),
            prior_sigma: b.prior_sigma,
            rho_init: b.rho_init,
            n_train_samples: b.n_train_samples,
            val_draws: b.val_draws,
            n_predict: b.n_predict,
        }
    }

    /// The run settings used for the bundled synthetic fixture.
    pub fn fixture_default(out: impl Into<PathBuf>) -> Self {
        Self::from_toml_str(FIXTURE_TOML)
            .map(|mut c| {
                c.output.dir = out.into();
                c
            })
            .expect("bundled fixture config parses")
    }
}

fn describe_toml_error(e: &toml::de::Error) -> String {
    // toml reports the offending span; the message already names the field
    e.message().to_string()
}

/// Commented configuration for the synthetic fixture.
pub const FIXTURE_TOML: &str = include_str!("../../configs/fixture.toml");
