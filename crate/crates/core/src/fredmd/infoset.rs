use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{Quarter, YearMonth};
use crate::error::{Error, Result};

use super::panel::PanelMatrix;
use super::target::TargetSeries;

/// Intra-quarterly month through which regressors are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoSetKind {
    M1,
    M2,
    M3,
}

impl InfoSetKind {
    pub const ALL: [InfoSetKind; 3] = [InfoSetKind::M1, InfoSetKind::M2, InfoSetKind::M3];

    /// 1, 2 or 3.
    pub fn month_in_quarter(self) -> u32 {
        match self {
            InfoSetKind::M1 => 1,
            InfoSetKind::M2 => 2,
            InfoSetKind::M3 => 3,
        }
    }

    /// Calendar month `3(q-1) + k` of quarter `q`.
    pub fn cutoff(self, q: Quarter) -> YearMonth {
        q.first_month().add_months(self.month_in_quarter() as i64 - 1)
    }

    /// Monthly index form of [`InfoSetKind::cutoff`] for quarter index `q`.
    pub fn cutoff_index(self, q: i64) -> i64 {
        3 * (q - 1) + self.month_in_quarter() as i64
    }
}

impl fmt::Display for InfoSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.month_in_quarter())
    }
}

impl FromStr for InfoSetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" | "1" => Ok(InfoSetKind::M1),
            "m2" | "2" => Ok(InfoSetKind::M2),
            "m3" | "3" => Ok(InfoSetKind::M3),
            other => Err(Error::Config(format!("unknown information set '{other}'"))),
        }
    }
}

/// An information set: the regressor cutoff rule for every quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InformationSet {
    pub kind: InfoSetKind,
}

impl InformationSet {
    pub fn cutoff_month(&self, q: Quarter) -> YearMonth {
        self.kind.cutoff(q)
    }
}

/// One `(X, y)` pair: `x` holds `seq_len` monthly rows ending at the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub quarter: Quarter,
    pub cutoff: YearMonth,
    pub x: Vec<Vec<f64>>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub kind: InfoSetKind,
    pub seq_len: usize,
    pub sequences: Vec<Sequence>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.sequences.iter().map(|s| s.y).collect()
    }

    /// Sequences whose quarter lies in `[from, to)`.
    pub fn between(&self, from: Quarter, to: Quarter) -> SequenceSet {
        SequenceSet {
            kind: self.kind,
            seq_len: self.seq_len,
            sequences: self
                .sequences
                .iter()
                .filter(|s| s.quarter >= from && s.quarter < to)
                .cloned()
                .collect(),
        }
    }
}

/// The regressor window for quarter `q`: `seq_len` rows ending at the
/// cutoff month of `kind`.
pub fn regressor_window(panel: &PanelMatrix, q: Quarter, kind: InfoSetKind, seq_len: usize) -> Result<Vec<Vec<f64>>> {
    let cutoff = kind.cutoff(q);
    let end = panel
        .row_of(cutoff)
        .ok_or_else(|| Error::Windowing(format!("panel does not cover cutoff {cutoff} of {q}")))?;
    if end + 1 < seq_len {
        return Err(Error::Windowing(format!(
            "{q}: window of {seq_len} months ending {cutoff} starts before the panel"
        )));
    }
    Ok(panel.values[end + 1 - seq_len..=end].to_vec())
}

/// Builds one sequence per quarter whose target is observed and whose full
/// regressor window lies inside the panel.
pub fn build_information_set(
    panel: &PanelMatrix,
    target: &TargetSeries,
    kind: InfoSetKind,
    seq_len: usize,
) -> Result<SequenceSet> {
    if seq_len == 0 {
        return Err(Error::Windowing("sequence length must be positive".into()));
    }
    if seq_len > panel.values.len() {
        return Err(Error::Windowing(format!(
            "sequence length {seq_len} exceeds the {} months of history",
            panel.values.len()
        )));
    }
    let sequences = target
        .quarters
        .iter()
        .zip(&target.growth)
        .filter_map(|(&q, &y)| {
            let x = regressor_window(panel, q, kind, seq_len).ok()?;
            Some(Sequence {
                quarter: q,
                cutoff: kind.cutoff(q),
                x,
                y,
            })
        })
        .collect();
    Ok(SequenceSet {
        kind,
        seq_len,
        sequences,
    })
}
