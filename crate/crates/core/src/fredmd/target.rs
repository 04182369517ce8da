use serde::{Deserialize, Serialize};

use crate::calendar::{Quarter, Timeline, YearMonth};
use crate::error::{Error, Result};

/// Quarterly GDP growth in percent, indexed on a monthly [`Timeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub timeline: Timeline,
    pub quarters: Vec<Quarter>,
    pub growth: Vec<f64>,
}

impl TargetSeries {
    pub fn new(timeline: Timeline, quarters: Vec<Quarter>, growth: Vec<f64>) -> Result<Self> {
        if quarters.len() != growth.len() {
            return Err(Error::Validation("quarters and growth lengths differ".into()));
        }
        if let Some(i) = growth.iter().position(|g| !g.is_finite()) {
            return Err(Error::Validation(format!("non-finite growth for {}", quarters[i])));
        }
        for w in quarters.windows(2) {
            if w[1].ordinal() - w[0].ordinal() != 1 {
                return Err(Error::Validation(format!("quarters not consecutive: {} then {}", w[0], w[1])));
            }
        }
        Ok(Self {
            timeline,
            quarters,
            growth,
        })
    }

    /// Monthly index of the month in which quarter `q` is measured (3q).
    pub fn monthly_index(&self, q: Quarter) -> i64 {
        3 * self.timeline.quarter_index(q)
    }

    pub fn get(&self, q: Quarter) -> Option<f64> {
        let first = *self.quarters.first()?;
        let off = q.ordinal() - first.ordinal();
        (off >= 0).then(|| self.growth.get(off as usize).copied()).flatten()
    }

    /// Values for the half-open quarter range `[from, to)` that are observed.
    pub fn range(&self, from: Quarter, to: Quarter) -> Vec<(Quarter, f64)> {
        self.quarters
            .iter()
            .zip(&self.growth)
            .filter(|(q, _)| **q >= from && **q < to)
            .map(|(q, g)| (*q, *g))
            .collect()
    }

    pub fn last_quarter(&self) -> Option<Quarter> {
        self.quarters.last().copied()
    }
}

/// How the value column of a GDP CSV is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdpColumn {
    /// Levels; growth is the percent change on the previous quarter.
    Levels,
    /// Already percent growth.
    Growth,
}

/// Parses a two-column `date,value` CSV with one row per quarter (dated by
/// any month in the quarter, FRED uses the first) into percent growth.
pub fn parse_gdp_csv(bytes: &[u8], column: GdpColumn, timeline: Timeline) -> Result<TargetSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let mut obs: Vec<(Quarter, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                line,
                msg: "expected date and value columns".into(),
            });
        }
        let date = YearMonth::parse_date(&rec[0]).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let raw = rec[1].trim();
        if raw.is_empty() || raw == "." {
            continue;
        }
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("value '{raw}' is not a number"),
        })?;
        obs.push((date.quarter(), v));
    }
    let (quarters, growth) = match column {
        GdpColumn::Growth => obs.into_iter().unzip(),
        GdpColumn::Levels => obs
            .windows(2)
            .map(|w| (w[1].0, 100.0 * (w[1].1 / w[0].1 - 1.0)))
            .unzip(),
    };
    TargetSeries::new(timeline, quarters, growth)
}
