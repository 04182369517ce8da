use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::Quarter;
use crate::error::{Error, Result};
use crate::fredmd::InfoSetKind;
use crate::stats::{describe, DensityStats};

use super::metrics::{MetricsTable, METRICS_COLUMNS};
use super::record::{sort_records, Density, Engine, NowcastRecord};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STATS_FILE: &str = "stats.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Descriptive statistics of one empirical density nowcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub engine: Engine,
    pub info_set: InfoSetKind,
    pub quarter: Quarter,
    #[serde(flatten)]
    pub stats: DensityStats,
}

/// Statistics for every record holding draws; records whose draws are too
/// few or constant are skipped.
pub fn density_stats(records: &[NowcastRecord]) -> Vec<StatsRow> {
    records
        .iter()
        .filter_map(|r| match &r.density {
            Some(Density::Empirical(e)) => describe(e.samples()).ok().map(|stats| StatsRow {
                engine: r.engine,
                info_set: r.info_set,
                quarter: r.quarter,
                stats,
            }),
            _ => None,
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10}")).unwrap_or_default()
}

/// Metrics as CSV with the columns of [`METRICS_COLUMNS`].
pub fn metrics_csv(table: &MetricsTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let data_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(METRICS_COLUMNS).map_err(data_err)?;
    for r in &table.rows {
        w.write_record([
            r.engine.to_string(),
            r.info_set.to_string(),
            r.n.to_string(),
            cell(Some(r.rmse)),
            cell(Some(r.mae)),
            cell(r.rel_rmse_naive),
            cell(r.rel_mae_naive),
            cell(r.rel_rmse_dfm),
            cell(r.rel_mae_dfm),
            cell(r.dm_p_naive_sq),
            cell(r.dm_p_naive_abs),
            cell(r.dm_p_dfm_sq),
            cell(r.dm_p_dfm_abs),
        ])
        .map_err(data_err)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Writes records (sorted), metrics and density statistics into `dir`.
/// Output bytes depend only on the inputs. Returns the written paths.
pub fn persist_results(records: &[NowcastRecord], metrics: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let files = [
        (RECORDS_FILE, jsonl(&sorted)?),
        (METRICS_FILE, metrics_csv(metrics)?),
        (STATS_FILE, jsonl(&density_stats(&sorted))?),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_records(dir: &Path) -> Result<Vec<NowcastRecord>> {
    let path = dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

pub fn read_stats(dir: &Path) -> Result<Vec<StatsRow>> {
    let path = dir.join(STATS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.write_all(b"\n").expect("writing to a Vec");
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfm::GaussianDensity;
    use crate::eval::metrics::compute_metrics;
    use crate::stats::EmpiricalDensity;

    fn records() -> Vec<NowcastRecord> {
        let mut out = Vec::new();
        for i in 0..12 {
            let q = Quarter::new(2012, 1).unwrap().add(i);
            let draws: Vec<f64> = (0..50).map(|k| ((k * 37 + i as usize * 11) % 50) as f64 / 25.0 - 1.0 + 0.1 * i as f64).collect();
            let mut a = NowcastRecord::new(q, InfoSetKind::M3, Engine::Bbb, Density::Empirical(EmpiricalDensity::new(draws).unwrap()));
            let mut b = NowcastRecord::new(q, InfoSetKind::M3, Engine::Naive, Density::Gaussian(GaussianDensity::new(0.7, 1.3).unwrap()));
            a.actual = Some(0.1 * i as f64 + 0.05);
            b.actual = a.actual;
            out.push(b);
            out.push(a);
        }
        out
    }

    #[test]
    fn round_trip_and_stable_bytes() {
        let recs = records();
        let metrics = compute_metrics(&recs).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        persist_results(&recs, &metrics, d1.path()).unwrap();
        let mut reversed = recs.clone();
        reversed.reverse();
        persist_results(&reversed, &metrics, d2.path()).unwrap();
        for f in [RECORDS_FILE, METRICS_FILE, STATS_FILE] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
        let mut expected = recs.clone();
        sort_records(&mut expected);
        assert_eq!(read_records(d1.path()).unwrap(), expected);
        assert_eq!(read_stats(d1.path()).unwrap().len(), 12);
    }

    #[test]
    fn metrics_header_is_the_schema() {
        let csv = metrics_csv(&compute_metrics(&records()).unwrap()).unwrap();
        let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, METRICS_COLUMNS.join(","));
    }
}
