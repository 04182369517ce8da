use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

use super::panel::PanelMatrix;
use super::target::TargetSeries;
use super::transform::TCode;

/// JSON sidecar written next to a panel snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub release_tag: YearMonth,
    pub cutoff: YearMonth,
    pub mnemonics: Vec<String>,
    pub tcodes: Vec<TCode>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub first_month: YearMonth,
    pub last_month: YearMonth,
}

/// Writes `{stem}_panel.csv`, `{stem}_meta.json` and, when given,
/// `{stem}_target.csv` into `dir`. Returns the written paths.
pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    panel: &PanelMatrix,
    tcodes: &[TCode],
    release_tag: YearMonth,
    cutoff: YearMonth,
    target: Option<&TargetSeries>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let panel_path = dir.join(format!("{stem}_panel.csv"));
    let mut w = csv::Writer::from_path(&panel_path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["date".to_string()];
    header.extend(panel.mnemonics.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (d, row) in panel.dates.iter().zip(&panel.values) {
        let mut rec = vec![d.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.12e}")));
        w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&panel_path, e))?;
    written.push(panel_path);

    if let Some(t) = target {
        let path = dir.join(format!("{stem}_target.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(e.to_string()))?;
        w.write_record(["quarter", "monthly_index", "growth"]).map_err(|e| Error::Data(e.to_string()))?;
        for (q, g) in t.quarters.iter().zip(&t.growth) {
            w.write_record([q.to_string(), t.monthly_index(*q).to_string(), format!("{g:.12e}")])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let meta = SnapshotMeta {
        release_tag,
        cutoff,
        mnemonics: panel.mnemonics.clone(),
        tcodes: tcodes.to_vec(),
        feature_means: panel.feature_means.clone(),
        feature_stds: panel.feature_stds.clone(),
        first_month: panel.dates[0],
        last_month: *panel.dates.last().unwrap(),
    };
    let meta_path = dir.join(format!("{stem}_meta.json"));
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    written.push(meta_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_round_trips() {
        let first = YearMonth::new(2000, 1).unwrap();
        let panel = PanelMatrix {
            dates: vec![first, first.add_months(1)],
            mnemonics: vec!["A".into()],
            values: vec![vec![0.5], vec![-0.5]],
            feature_means: vec![3.0],
            feature_stds: vec![2.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = write_snapshot(dir.path(), "v", &panel, &[TCode::LogDiff], first, first.add_months(1), None).unwrap();
        assert_eq!(paths.len(), 2);
        let meta: SnapshotMeta = serde_json::from_slice(&fs::read(&paths[1]).unwrap()).unwrap();
        assert_eq!(meta.tcodes, vec![TCode::LogDiff]);
        assert_eq!(meta.feature_stds, vec![2.0]);
        let csv = fs::read_to_string(&paths[0]).unwrap();
        assert!(csv.starts_with("date,A\n2000-01,"));
    }
}
