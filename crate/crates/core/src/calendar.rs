//! Monthly and quarterly calendar arithmetic.
//!
//! Quarters are dated by their last month, so quarter `q` of a [`Timeline`]
//! ends at monthly index `t = 3q`, with `t = 1` the first month of the first
//! quarter.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Validation(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    /// Months elapsed since January of year 0.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        let year = ord.div_euclid(12) as i32;
        let month = ord.rem_euclid(12) as u32 + 1;
        Self { year, month }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Signed month distance `self - other`.
    pub fn months_since(self, other: YearMonth) -> i64 {
        self.ordinal() - other.ordinal()
    }

    pub fn quarter(self) -> Quarter {
        Quarter {
            year: self.year,
            q: (self.month - 1) / 3 + 1,
        }
    }

    /// Accepts `M/D/YYYY`, `YYYY-MM-DD` and `YYYY-MM`.
    pub fn parse_date(s: &str) -> Result<Self> {
        let s = s.trim();
        let date = NaiveDate::parse_from_str(s, "%m/%d/%Y")
            .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
            .or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d"))
            .map_err(|_| Error::Validation(format!("unrecognised date '{s}'")))?;
        Ok(Self {
            year: date.year(),
            month: date.month(),
        })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_date(s)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A calendar quarter, `q` in 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub q: u32,
}

impl Quarter {
    pub fn new(year: i32, q: u32) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Validation(format!("quarter {q} outside 1..=4")));
        }
        Ok(Self { year, q })
    }

    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(4) as i32,
            q: ord.rem_euclid(4) as u32 + 1,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    pub fn first_month(self) -> YearMonth {
        YearMonth {
            year: self.year,
            month: 3 * (self.q - 1) + 1,
        }
    }

    pub fn last_month(self) -> YearMonth {
        YearMonth {
            year: self.year,
            month: 3 * self.q,
        }
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Accepts `2020:Q2`, `2020Q2` and `2020-Q2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let up = s.to_ascii_uppercase();
        let (y, q) = up
            .split_once('Q')
            .ok_or_else(|| Error::Validation(format!("unrecognised quarter '{s}'")))?;
        let y = y.trim_end_matches([':', '-', ' ']);
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Validation(format!("unrecognised quarter '{s}'")))?;
        let q: u32 = q
            .parse()
            .map_err(|_| Error::Validation(format!("unrecognised quarter '{s}'")))?;
        Quarter::new(year, q)
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps calendar months to the 1-based monthly index used by the models.
///
/// The origin must be the first month of a quarter so that every quarter
/// index `q >= 1` ends at monthly index `3q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    origin: YearMonth,
}

impl Timeline {
    pub fn new(origin: YearMonth) -> Result<Self> {
        if !(origin.month - 1).is_multiple_of(3) {
            return Err(Error::Validation(format!(
                "timeline origin {origin} is not the first month of a quarter"
            )));
        }
        Ok(Self { origin })
    }

    pub fn origin(&self) -> YearMonth {
        self.origin
    }

    /// Monthly index of `ym`; the origin maps to 1.
    pub fn month_index(&self, ym: YearMonth) -> i64 {
        ym.months_since(self.origin) + 1
    }

    pub fn month_at(&self, t: i64) -> YearMonth {
        self.origin.add_months(t - 1)
    }

    pub fn quarter_index(&self, q: Quarter) -> i64 {
        q.ordinal() - self.origin.quarter().ordinal() + 1
    }

    pub fn quarter_at(&self, q: i64) -> Quarter {
        self.origin.quarter().add(q - 1)
    }
}
