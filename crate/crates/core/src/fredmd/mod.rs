//! FRED-MD vintage ingestion: parsing, transform codes, ragged-edge
//! extrapolation, standardization and information-set windowing.

mod fetch;
mod infoset;
mod panel;
mod snapshot;
mod target;
mod transform;

pub use fetch::{default_cache_dir, fetch_vintage, resolved_cache_dir, vintage_url, FetchConfig, CACHE_ENV};
pub use infoset::{build_information_set, regressor_window, InfoSetKind, InformationSet, Sequence, SequenceSet};
pub use panel::{
    dfm_feature_subset, extrapolate_ragged_edge, fit_ar1, PanelMatrix, RaggedPanel,
    DFM_SERIES, MIN_AR1_OBS,
};
pub use snapshot::{write_snapshot, SnapshotMeta};
pub use target::{parse_gdp_csv, GdpColumn, TargetSeries};
pub use transform::{apply_tcode, transform_column, TCode};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

/// One dated FRED-MD release.
#[derive(Debug, Clone, PartialEq)]
pub struct VintageTable {
    pub release_tag: YearMonth,
    pub dates: Vec<YearMonth>,
    pub mnemonics: Vec<String>,
    pub tcodes: Vec<TCode>,
    /// months x series; `None` marks a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
}

impl VintageTable {
    pub fn n_months(&self) -> usize {
        self.dates.len()
    }

    pub fn n_series(&self) -> usize {
        self.mnemonics.len()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|row| row[j]).collect()
    }

    pub fn position(&self, mnemonic: &str) -> Option<usize> {
        self.mnemonics.iter().position(|m| m == mnemonic)
    }

    /// Row index of `ym`, if the vintage covers it.
    pub fn row_of(&self, ym: YearMonth) -> Option<usize> {
        let first = *self.dates.first()?;
        let off = ym.months_since(first);
        (off >= 0 && (off as usize) < self.dates.len()).then_some(off as usize)
    }

    /// Checks the structural invariants of a vintage.
    pub fn validate(&self) -> Result<()> {
        if self.tcodes.len() != self.mnemonics.len() {
            return Err(Error::Validation(format!(
                "{} tcodes for {} series",
                self.tcodes.len(),
                self.mnemonics.len()
            )));
        }
        for w in self.dates.windows(2) {
            if w[1].months_since(w[0]) != 1 {
                return Err(Error::Validation(format!(
                    "dates not at consecutive monthly steps: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.mnemonics.len() {
                return Err(Error::Validation(format!("row {i} has {} cells", row.len())));
            }
        }
        for j in 0..self.n_series() {
            let n = self.values.iter().filter(|r| r[j].is_some()).count();
            if n < 2 {
                return Err(Error::Validation(format!(
                    "series {} has {n} observations",
                    self.mnemonics[j]
                )));
            }
        }
        Ok(())
    }

    /// Keeps only the named series, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<VintageTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.position(n)
                    .ok_or_else(|| Error::Config(format!("series {n} not in vintage")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VintageTable {
            release_tag: self.release_tag,
            dates: self.dates.clone(),
            mnemonics: idx.iter().map(|&j| self.mnemonics[j].clone()).collect(),
            tcodes: idx.iter().map(|&j| self.tcodes[j]).collect(),
            values: self
                .values
                .iter()
                .map(|row| idx.iter().map(|&j| row[j]).collect())
                .collect(),
        })
    }

    /// Drops every row after `last`.
    pub fn truncate_after(&mut self, last: YearMonth) {
        let keep = self.dates.iter().take_while(|d| **d <= last).count();
        self.dates.truncate(keep);
        self.values.truncate(keep);
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a FRED-MD CSV: a header row of mnemonics, a row of transform
/// codes, then one row per month with the date in the first column.
///
/// Series with fewer than two observations are dropped with a warning.
pub fn parse_vintage(csv_bytes: &[u8]) -> Result<VintageTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_bytes);

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        rows.push((line, rec));
    }
    let mut rows = rows.into_iter().filter(|(_, r)| r.iter().any(|c| !c.trim().is_empty()));

    let (_, header) = rows.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let width = header.len();
    if width < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header needs a date column and at least one series".into(),
        });
    }
    let mnemonics: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();

    let (tline, trow) = rows.next().ok_or(Error::Parse {
        line: 2,
        msg: "missing transform-code row".into(),
    })?;
    if trow.len() != width {
        return Err(Error::Parse {
            line: tline,
            msg: format!("expected {width} cells, found {}", trow.len()),
        });
    }
    let tcodes = trow
        .iter()
        .skip(1)
        .enumerate()
        .map(|(j, cell)| {
            let code = cell
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("tcode '{cell}' for {} is not a number", mnemonics[j])))?;
            if code.fract() != 0.0 {
                return Err(Error::Validation(format!("tcode {code} for {} is not an integer", mnemonics[j])));
            }
            TCode::try_from(code as i64)
                .map_err(|e| Error::Validation(format!("{} (series {})", e, mnemonics[j])))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rows {
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        let date = YearMonth::parse_date(&rec[0]).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        dates.push(date);
        values.push(rec.iter().skip(1).map(parse_cell).collect::<Vec<_>>());
    }
    if dates.is_empty() {
        return Err(Error::Parse {
            line: 3,
            msg: "no data rows".into(),
        });
    }

    let mut table = VintageTable {
        release_tag: *dates.last().unwrap(),
        dates,
        mnemonics,
        tcodes,
        values,
    };

    let sparse: Vec<String> = (0..table.n_series())
        .filter(|&j| table.values.iter().filter(|r| r[j].is_some()).count() < 2)
        .map(|j| table.mnemonics[j].clone())
        .collect();
    if !sparse.is_empty() {
        log::warn!("dropping series with fewer than 2 observations: {sparse:?}");
        let keep: Vec<&str> = table
            .mnemonics
            .iter()
            .filter(|m| !sparse.contains(m))
            .map(String::as_str)
            .collect();
        table = table.select(&keep)?;
    }
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "sasdate,A,B\nTransform:,1,2\n1/1/2000,1.0,10\n2/1/2000,2.0,\n3/1/2000,3.0,12\n";

    #[test]
    fn parses_toy_vintage() {
        let v = parse_vintage(TOY.as_bytes()).unwrap();
        assert_eq!(v.n_series(), 2);
        assert_eq!(v.n_months(), 3);
        assert_eq!(v.mnemonics, vec!["A", "B"]);
        assert_eq!(v.tcodes, vec![TCode::Level, TCode::Diff]);
        assert_eq!(v.release_tag, YearMonth::new(2000, 3).unwrap());
    }

    #[test]
    fn empty_cell_is_missing_not_zero() {
        let v = parse_vintage(TOY.as_bytes()).unwrap();
        assert_eq!(v.values[1][1], None);
        assert_eq!(v.values[2][1], Some(12.0));
    }

    #[test]
    fn rejects_out_of_range_tcode() {
        let bad = TOY.replace("Transform:,1,2", "Transform:,1,9");
        assert!(matches!(parse_vintage(bad.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn ragged_row_reports_line() {
        let bad = TOY.replace("2/1/2000,2.0,", "2/1/2000,2.0");
        match parse_vintage(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_monthly_dates_rejected() {
        let bad = TOY.replace("2/1/2000", "4/1/2000");
        assert!(parse_vintage(bad.as_bytes()).is_err());
    }

    #[test]
    fn iso_dates_and_blank_trailer_accepted() {
        let iso = "date,A\nTransform:,5\n2000-01-01,1\n2000-02-01,2\n,\n";
        let v = parse_vintage(iso.as_bytes()).unwrap();
        assert_eq!(v.n_months(), 2);
    }

    #[test]
    fn sparse_series_dropped() {
        let s = "d,A,B\nT,1,1\n2000-01,1,\n2000-02,2,\n2000-03,3,5\n";
        let v = parse_vintage(s.as_bytes()).unwrap();
        assert_eq!(v.mnemonics, vec!["A"]);
    }
}
