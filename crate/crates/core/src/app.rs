//! Command implementations behind the `densecast` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, persist_results, read_records, rolling_run, write_json, DataKind, Engine, FredMdSource,
    NowcastRecord, RunConfig, VintageSource, MANIFEST_FILE,
};
use crate::fixture::SyntheticFixture;
use crate::fredmd::{fetch_vintage, parse_vintage, InfoSetKind};
use crate::nn::Checkpoint;
use crate::report::{report_dir, ReportConfig};

/// Everything needed to reproduce a run; written before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    pub global_seed: u64,
    pub engines: Vec<Engine>,
    pub info_sets: Vec<InfoSetKind>,
    /// Earliest and latest vintage cutoff month the run reads.
    pub vintage_range: (YearMonth, YearMonth),
    pub output_dir: PathBuf,
    pub data: String,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, config_path: Option<&Path>, data: String) -> Self {
        let quarters = cfg.windows.eval_quarters();
        let first = cfg.engines.info_sets.iter().map(|k| k.cutoff(quarters[0])).min().expect("validated");
        let last = cfg
            .engines
            .info_sets
            .iter()
            .map(|k| k.cutoff(*quarters.last().expect("validated")))
            .max()
            .expect("validated");
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path: config_path.map(Path::to_path_buf),
            global_seed: cfg.seeds.global,
            engines: cfg.engines.list.clone(),
            info_sets: cfg.engines.info_sets.clone(),
            vintage_range: (first, last),
            output_dir: cfg.output.dir.clone(),
            data,
            config: cfg.clone(),
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub engines: Option<Vec<Engine>>,
    pub info_sets: Option<Vec<InfoSetKind>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(e) = &self.engines {
            cfg.engines.list = e.clone();
        }
        if let Some(k) = &self.info_sets {
            cfg.engines.info_sets = k.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds.global = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<NowcastRecord>,
    pub files: Vec<PathBuf>,
    pub failed: usize,
}

impl RunOutcome {
    /// 0 when every nowcast succeeded, 1 when some were flagged.
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            1
        }
    }
}

/// Builds the data source a configuration names.
pub fn source_for(cfg: &RunConfig) -> Box<dyn VintageSource> {
    match cfg.data.source {
        DataKind::Fixture => Box::new(SyntheticFixture::generate(cfg.data.fixture_seed)),
        DataKind::Fredmd => Box::new(FredMdSource {
            source_url: cfg.data.source_url.clone(),
            cache_dir: cfg.data.cache_dir.clone().unwrap_or_else(crate::fredmd::default_cache_dir),
            gdp_csv: cfg.data.gdp_csv.clone(),
            gdp_url: cfg.data.gdp_url.clone(),
            gdp_column: cfg.data.gdp_column,
            timeline: cfg.timeline(),
        }),
    }
}

/// Runs the rolling evaluation and writes manifest, records, metrics and
/// density statistics into the output directory.
pub fn cmd_run(cfg: &RunConfig, config_path: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let source = source_for(cfg);
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = RunManifest::new(cfg, config_path, source.describe());
    let manifest_path = dir.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;

    let records = rolling_run(source.as_ref(), cfg)?;
    let metrics = compute_metrics(&records).unwrap_or_default();
    let mut files = vec![manifest_path];
    files.extend(persist_results(&records, &metrics, dir)?);
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    Ok(RunOutcome { records, files, failed })
}

/// Re-runs the configuration stored in a results directory's manifest.
pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Downloads every monthly vintage from `from` through `to` into the cache.
pub fn cmd_fetch(from: YearMonth, to: YearMonth, source_url: &str, cache_dir: &Path) -> Result<Vec<PathBuf>> {
    if to < from {
        return Err(Error::Config(format!("--from {from} is after --to {to}")));
    }
    let mut out = Vec::new();
    let mut ym = from;
    while ym <= to {
        let v = fetch_vintage(&ym.to_string(), source_url, cache_dir)?;
        log::info!("{ym}: {} series x {} months", v.n_series(), v.n_months());
        out.push(crate::fredmd::resolved_cache_dir(cache_dir).join(format!("{ym}.csv")));
        ym = ym.add_months(1);
    }
    Ok(out)
}

pub fn cmd_report(results_dir: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    report_dir(results_dir, out, &ReportConfig::default())
}

/// Human-readable summary of a results directory, checkpoint or vintage CSV.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    if path.is_dir() {
        let records = read_records(path)?;
        let mut groups: Vec<(Engine, InfoSetKind)> = records.iter().map(|r| (r.engine, r.info_set)).collect();
        groups.sort();
        groups.dedup();
        let mut s = format!("{} records in {}\n", records.len(), path.display());
        for (e, k) in groups {
            let rs: Vec<&NowcastRecord> = records.iter().filter(|r| r.engine == e && r.info_set == k).collect();
            let ok = rs.iter().filter(|r| r.is_ok()).count();
            let first = rs.iter().map(|r| r.quarter).min().expect("non-empty group");
            let last = rs.iter().map(|r| r.quarter).max().expect("non-empty group");
            s.push_str(&format!("  {e:<10} {k}  {ok}/{} ok  {first}..{last}\n", rs.len()));
        }
        if let Ok(m) = load_manifest(path) {
            s.push_str(&format!("  seed {}  data: {}\n", m.global_seed, m.data));
        }
        return Ok(s);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("dcnn") => {
            let ck = Checkpoint::read(path)?;
            Ok(format!(
                "checkpoint {}: {} network, {} layers, input {:?}, {} scalars, seed {}\n",
                path.display(),
                if ck.meta.variational { "variational" } else { "deterministic" },
                ck.meta.architecture.len(),
                ck.meta.input_shape,
                ck.n_scalars(),
                ck.meta.seed
            ))
        }
        Some("csv") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let v = parse_vintage(&bytes)?;
            let missing = v.values.iter().flatten().filter(|c| c.is_none()).count();
            Ok(format!(
                "vintage {}: {} series x {} months ({}..{}), {} missing cells\n",
                path.display(),
                v.n_series(),
                v.n_months(),
                v.dates[0],
                v.dates.last().expect("validated"),
                missing
            ))
        }
        _ => Err(Error::Config(format!(
            "cannot inspect {}: expected a results directory, .dcnn checkpoint or vintage .csv",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_range_order_is_usage_error() {
        let d = tempfile::tempdir().unwrap();
        let a = YearMonth::new(2013, 1).unwrap();
        let b = YearMonth::new(2012, 1).unwrap();
        assert!(matches!(cmd_fetch(a, b, "http://127.0.0.1:9", d.path()), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_covers_every_cutoff() {
        let cfg = RunConfig::fixture_default("out");
        let m = RunManifest::new(&cfg, None, "fixture".into());
        assert_eq!(m.vintage_range.0, YearMonth::new(2012, 3).unwrap());
        assert_eq!(m.vintage_range.1, YearMonth::new(2021, 12).unwrap());
    }

    #[test]
    fn inspect_rejects_unknown_kind() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("x.bin");
        fs::write(&p, b"x").unwrap();
        assert!(cmd_inspect(&p).is_err());
    }
}
