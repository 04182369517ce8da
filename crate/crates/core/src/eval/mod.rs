//! Rolling-window evaluation: data sources, engine refits per quarter,
//! accuracy metrics, forecast comparison tests and result files.

mod config;
mod metrics;
mod persist;
mod record;
mod rolling;
mod source;

pub use config::{
    BbbSettings, DataConfig, DataKind, DfmSettings, EnginesConfig, OutputConfig, RunConfig, SeedConfig, WindowConfig,
    FIXTURE_TOML, REQUIRED_KEYS,
};
pub use metrics::{
    compute_metrics, diebold_mariano, dm_stars, naive_nowcast, rmse_mae, MetricsRow, MetricsTable, NaiveVariant,
    DM_MIN_LEN, METRICS_COLUMNS, NAIVE_MIN_QUARTERS, NAIVE_MIN_VARIANCE,
};
pub use persist::{
    density_stats, metrics_csv, persist_results, read_records, read_stats, write_json, StatsRow, MANIFEST_FILE,
    METRICS_FILE, RECORDS_FILE, STATS_FILE,
};
pub use record::{sort_records, Density, Engine, NowcastRecord};
pub use rolling::{
    derive_seed, prepare_quarter, rolling_run, run_bbb, run_dfm, run_mcdropout, run_naive, vintage_panel, QuarterData,
};
pub use source::{FredMdSource, VintageSource};
