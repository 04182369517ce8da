use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FRED-MD transformation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum TCode {
    /// 1: x
    Level,
    /// 2: Δx
    Diff,
    /// 3: Δ²x
    Diff2,
    /// 4: log x
    Log,
    /// 5: Δ log x
    LogDiff,
    /// 6: Δ² log x
    LogDiff2,
    /// 7: Δ(x_t / x_{t-1} - 1)
    PctChangeDiff,
}

impl TCode {
    pub fn code(self) -> i64 {
        match self {
            TCode::Level => 1,
            TCode::Diff => 2,
            TCode::Diff2 => 3,
            TCode::Log => 4,
            TCode::LogDiff => 5,
            TCode::LogDiff2 => 6,
            TCode::PctChangeDiff => 7,
        }
    }

    /// Number of leading observations lost to differencing.
    pub fn order(self) -> usize {
        match self {
            TCode::Level | TCode::Log => 0,
            TCode::Diff | TCode::LogDiff => 1,
            TCode::Diff2 | TCode::LogDiff2 | TCode::PctChangeDiff => 2,
        }
    }

    pub fn needs_positive(self) -> bool {
        matches!(self, TCode::Log | TCode::LogDiff | TCode::LogDiff2 | TCode::PctChangeDiff)
    }
}

impl TryFrom<i64> for TCode {
    type Error = String;

    fn try_from(v: i64) -> std::result::Result<Self, String> {
        Ok(match v {
            1 => TCode::Level,
            2 => TCode::Diff,
            3 => TCode::Diff2,
            4 => TCode::Log,
            5 => TCode::LogDiff,
            6 => TCode::LogDiff2,
            7 => TCode::PctChangeDiff,
            _ => return Err(format!("tcode {v} outside 1..=7")),
        })
    }
}

impl From<TCode> for i64 {
    fn from(t: TCode) -> i64 {
        t.code()
    }
}

impl fmt::Display for TCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Applies a transform code to a fully observed series. The output is
/// shorter than the input by [`TCode::order`].
pub fn apply_tcode(series: &[f64], code: TCode) -> Result<Vec<f64>> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain {
            index: i,
            msg: "non-finite input".into(),
        });
    }
    if code.needs_positive() {
        if let Some(i) = series.iter().position(|&v| v <= 0.0) {
            return Err(Error::Domain {
                index: i,
                msg: format!("tcode {code} needs strictly positive values, got {}", series[i]),
            });
        }
    }
    if series.len() <= code.order() {
        return Ok(Vec::new());
    }
    let out = match code {
        TCode::Level => series.to_vec(),
        TCode::Diff => diff(series),
        TCode::Diff2 => diff(&diff(series)),
        TCode::Log => series.iter().map(|v| v.ln()).collect(),
        TCode::LogDiff => diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>()),
        TCode::LogDiff2 => diff(&diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>())),
        TCode::PctChangeDiff => {
            let growth: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
            diff(&growth)
        }
    };
    Ok(out)
}

/// Date-aligned transform of a column with missing cells: output has the
/// input's length, with `None` wherever any required lag is missing.
pub fn transform_column(col: &[Option<f64>], code: TCode) -> Result<Vec<Option<f64>>> {
    let order = code.order();
    let mut out = vec![None; col.len()];
    for t in order..col.len() {
        let window: Option<Vec<f64>> = col[t - order..=t].iter().copied().collect();
        if let Some(w) = window {
            let v = apply_tcode(&w, code).map_err(|e| match e {
                Error::Domain { index, msg } => Error::Domain {
                    index: t - order + index,
                    msg,
                },
                other => other,
            })?;
            out[t] = v.last().copied();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_difference() {
        assert_eq!(apply_tcode(&[1.0, 3.0, 6.0], TCode::Diff).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn log_diff_of_constant_is_zero() {
        let out = apply_tcode(&[4.2; 6], TCode::LogDiff).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn code_seven_on_doubling_series() {
        // growth is 1 every month, so its difference vanishes
        assert_eq!(apply_tcode(&[1.0, 2.0, 4.0, 8.0], TCode::PctChangeDiff).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn output_shrinks_by_order() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        let expected = [0, 1, 2, 0, 1, 2, 2];
        for code in 1..=7 {
            let t = TCode::try_from(code).unwrap();
            assert_eq!(apply_tcode(&x, t).unwrap().len(), x.len() - expected[code as usize - 1]);
        }
    }

    #[test]
    fn log_code_rejects_nonpositive_with_index() {
        match apply_tcode(&[1.0, 2.0, 0.0, 3.0], TCode::LogDiff) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aligned_transform_keeps_dates() {
        let col = [Some(1.0), Some(3.0), None, Some(6.0), Some(10.0)];
        let out = transform_column(&col, TCode::Diff).unwrap();
        assert_eq!(out, vec![None, Some(2.0), None, None, Some(4.0)]);
    }

    #[test]
    fn tcode_out_of_range() {
        assert!(TCode::try_from(0).is_err());
        assert!(TCode::try_from(8).is_err());
    }

    proptest! {
        #[test]
        fn diff_round_trips_through_cumsum(xi in prop::collection::vec(-1000i32..1000, 2..50)) {
            // integer-valued inputs keep every sum exact
            let x: Vec<f64> = xi.iter().map(|&v| v as f64).collect();
            let d = apply_tcode(&x, TCode::Diff).unwrap();
            let mut acc = x[0];
            let mut rebuilt = vec![acc];
            for v in &d {
                acc += v;
                rebuilt.push(acc);
            }
            prop_assert_eq!(rebuilt, x);
        }
    }
}
