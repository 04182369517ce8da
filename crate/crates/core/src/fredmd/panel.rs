use std::ops::Range;

use crate::calendar::YearMonth;
use crate::error::{Error, Result};

use super::transform::transform_column;
use super::VintageTable;

/// Minimum observed values a column needs before it can be extrapolated.
pub const MIN_AR1_OBS: usize = 8;

/// The four coincident indicators used by the factor model, in order.
/// Each entry lists accepted mnemonics, preferred first.
pub const DFM_SERIES: [(&str, &[&str]); 4] = [
    ("IPMANSICS", &["IPMANSICS"]),
    ("W875RX1", &["W875RX1"]),
    ("CMRMTSPL", &["CMRMTSPL", "CMRMTSPLx"]),
    ("PAYEMS", &["PAYEMS"]),
];

/// Transformed panel that may still carry missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RaggedPanel {
    pub dates: Vec<YearMonth>,
    pub mnemonics: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

/// Complete (no missing cells) transformed and standardized panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMatrix {
    pub dates: Vec<YearMonth>,
    pub mnemonics: Vec<String>,
    /// months x features
    pub values: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

impl RaggedPanel {
    /// Applies each series' transform code and keeps rows `first..=last`.
    /// Months past the end of the vintage become fully missing rows.
    pub fn from_vintage(vintage: &VintageTable, first: YearMonth, last: YearMonth) -> Result<Self> {
        if last < first {
            return Err(Error::Windowing(format!("empty month range {first}..{last}")));
        }
        let start = vintage
            .row_of(first)
            .ok_or_else(|| Error::Windowing(format!("vintage does not cover {first}")))?;
        let n_rows = (last.months_since(first) + 1) as usize;
        let k = vintage.n_series();
        let mut values = vec![vec![None; k]; n_rows];
        for j in 0..k {
            let col = transform_column(&vintage.column(j), vintage.tcodes[j]).map_err(|e| {
                Error::Data(format!("series {}: {e}", vintage.mnemonics[j]))
            })?;
            for (r, row) in values.iter_mut().enumerate() {
                row[j] = col.get(start + r).copied().flatten();
            }
        }
        Ok(Self {
            dates: (0..n_rows as i64).map(|i| first.add_months(i)).collect(),
            mnemonics: vintage.mnemonics.clone(),
            values,
            feature_means: vec![0.0; k],
            feature_stds: vec![1.0; k],
        })
    }

    pub fn n_features(&self) -> usize {
        self.mnemonics.len()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn row_of(&self, ym: YearMonth) -> Option<usize> {
        let off = ym.months_since(*self.dates.first()?);
        (off >= 0 && (off as usize) < self.dates.len()).then_some(off as usize)
    }

    /// Keeps the columns whose missing cells (if any) all sit after the
    /// last observation within `rows`. Returns the dropped mnemonics.
    pub fn retain_ragged_edge_columns(&mut self, rows: Range<usize>) -> Vec<String> {
        let rows = rows.start..rows.end.min(self.values.len());
        let keep: Vec<bool> = (0..self.n_features())
            .map(|j| {
                let col: Vec<Option<f64>> = self.values[rows.clone()].iter().map(|r| r[j]).collect();
                let n_obs = col.iter().take_while(|v| v.is_some()).count();
                col[n_obs..].iter().all(Option::is_none) && n_obs >= MIN_AR1_OBS
            })
            .collect();
        let dropped: Vec<String> = self
            .mnemonics
            .iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(m, _)| m.clone())
            .collect();
        if dropped.is_empty() {
            return dropped;
        }
        fn filter<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| x.clone()).collect()
        }
        self.mnemonics = filter(&self.mnemonics, &keep);
        self.feature_means = filter(&self.feature_means, &keep);
        self.feature_stds = filter(&self.feature_stds, &keep);
        for row in &mut self.values {
            *row = filter(row, &keep);
        }
        dropped
    }

    /// Drops leading rows until every column is observed.
    pub fn trim_leading(&mut self) {
        let skip = self
            .values
            .iter()
            .take_while(|r| r.iter().any(Option::is_none))
            .count();
        self.values.drain(..skip);
        self.dates.drain(..skip);
    }

    /// Standardizes every column with mean and (N-1) standard deviation
    /// computed over the observed cells of `fit_rows`; the constants are
    /// composed with any earlier standardization.
    pub fn standardize(&mut self, fit_rows: Range<usize>) -> Result<()> {
        for j in 0..self.n_features() {
            let obs: Vec<f64> = self.values[fit_rows.clone()].iter().filter_map(|r| r[j]).collect();
            let (mean, std) = mean_std(&obs).ok_or_else(|| {
                Error::InsufficientData(format!("series {} has <2 values in fitting window", self.mnemonics[j]))
            })?;
            if std <= 0.0 {
                return Err(Error::Data(format!("series {} is constant in fitting window", self.mnemonics[j])));
            }
            for row in &mut self.values {
                if let Some(v) = row[j].as_mut() {
                    *v = (*v - mean) / std;
                }
            }
            self.feature_means[j] += mean * self.feature_stds[j];
            self.feature_stds[j] *= std;
        }
        Ok(())
    }

    /// Row-major dense copy with `NaN` for missing cells.
    pub fn to_rows_nan(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
            .collect()
    }
}

impl PanelMatrix {
    pub fn n_features(&self) -> usize {
        self.mnemonics.len()
    }

    pub fn row_of(&self, ym: YearMonth) -> Option<usize> {
        let off = ym.months_since(*self.dates.first()?);
        (off >= 0 && (off as usize) < self.dates.len()).then_some(off as usize)
    }
}

pub(crate) fn mean_std(x: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// OLS fit of `x_t = alpha + beta * x_{t-1}` on consecutive pairs.
pub fn fit_ar1(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("AR(1) needs 3 values, got {}", x.len())));
    }
    let lagged = &x[..x.len() - 1];
    let current = &x[1..];
    let n = lagged.len() as f64;
    let mx = lagged.iter().sum::<f64>() / n;
    let my = current.iter().sum::<f64>() / n;
    let sxx: f64 = lagged.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lagged.iter().zip(current).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        // constant history: carry the mean forward
        return Ok((my, 0.0));
    }
    let beta = sxy / sxx;
    Ok((my - beta * mx, beta))
}

/// Fills trailing missing values of each column through `cutoff` with
/// iterated AR(1) forecasts. Rows after `cutoff` are dropped.
pub fn extrapolate_ragged_edge(panel: &RaggedPanel, cutoff: YearMonth) -> Result<PanelMatrix> {
    let first = *panel
        .dates
        .first()
        .ok_or_else(|| Error::InsufficientData("empty panel".into()))?;
    let n_rows = cutoff.months_since(first) + 1;
    if n_rows < 1 {
        return Err(Error::Windowing(format!("cutoff {cutoff} precedes panel start {first}")));
    }
    let n_rows = n_rows as usize;
    let k = panel.n_features();
    let mut values = vec![vec![0.0; k]; n_rows];
    for j in 0..k {
        let col: Vec<Option<f64>> = (0..n_rows)
            .map(|r| panel.values.get(r).and_then(|row| row[j]))
            .collect();
        let observed: Vec<f64> = col.iter().map_while(|v| *v).collect();
        if let Some(pos) = col[observed.len()..].iter().position(Option::is_some) {
            let at = observed.len() + pos;
            return Err(Error::Data(format!(
                "series {} has a gap before {} (only trailing gaps are filled)",
                panel.mnemonics[j], panel.dates.get(at).copied().unwrap_or(cutoff)
            )));
        }
        if observed.len() < MIN_AR1_OBS {
            return Err(Error::InsufficientData(format!(
                "series {} has {} observations, need {MIN_AR1_OBS}",
                panel.mnemonics[j],
                observed.len()
            )));
        }
        let mut filled = observed.clone();
        if filled.len() < n_rows {
            let (alpha, beta) = fit_ar1(&observed)?;
            while filled.len() < n_rows {
                let prev = *filled.last().unwrap();
                filled.push(alpha + beta * prev);
            }
        }
        for (row, v) in values.iter_mut().zip(filled) {
            row[j] = v;
        }
    }
    Ok(PanelMatrix {
        dates: (0..n_rows as i64).map(|i| first.add_months(i)).collect(),
        mnemonics: panel.mnemonics.clone(),
        values,
        feature_means: panel.feature_means.clone(),
        feature_stds: panel.feature_stds.clone(),
    })
}

/// Resolves the factor-model indicators in `vintage`, accepting aliases.
pub(crate) fn resolve_dfm_series(vintage: &VintageTable) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(DFM_SERIES.len());
    let mut missing = Vec::new();
    for (canonical, aliases) in DFM_SERIES {
        match aliases.iter().find(|a| vintage.position(a).is_some()) {
            Some(a) => names.push(a.to_string()),
            None => missing.push(format!("{canonical} (accepts {})", aliases.join("/"))),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "vintage lacks factor-model series: {}",
            missing.join(", ")
        )));
    }
    Ok(names)
}

/// Transformed, standardized four-indicator panel for the factor model.
/// Columns carry canonical names; trailing gaps stay missing.
pub fn dfm_feature_subset(vintage: &VintageTable) -> Result<RaggedPanel> {
    let names = resolve_dfm_series(vintage)?;
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let sub = vintage.select(&refs)?;
    let first = sub.dates[0];
    let last = *sub.dates.last().unwrap();
    let mut panel = RaggedPanel::from_vintage(&sub, first, last)?;
    panel.trim_leading();
    panel.mnemonics = DFM_SERIES.iter().map(|(c, _)| c.to_string()).collect();
    let n = panel.values.len();
    panel.standardize(0..n)?;
    Ok(panel)
}
