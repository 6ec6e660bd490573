//! ISO year-week identifiers used to key weekly return observations.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error parsing a `YYYY-Www` week label.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid ISO week label `{0}` (expected YYYY-Www, e.g. 2015-W07)")]
pub struct WeekParseError(pub String);

/// An ISO 8601 year-week, e.g. `2015-W07`.
///
/// Ordering is chronological: ISO years partition weeks, so lexicographic
/// `(year, week)` order equals calendar order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeekId {
    pub year: i32,
    pub week: u8,
}

impl WeekId {
    pub fn new(year: i32, week: u8) -> Result<Self, WeekParseError> {
        let id = WeekId { year, week };
        if id.start_date().is_none() {
            return Err(WeekParseError(format!("{year:04}-W{week:02}")));
        }
        Ok(id)
    }

    /// Monday of this ISO week, if the (year, week) pair exists.
    pub fn start_date(&self) -> Option<NaiveDate> {
        NaiveDate::from_isoywd_opt(self.year, u32::from(self.week), Weekday::Mon)
    }

    /// Calendar year of the week's start date. Week 1 of an ISO year can
    /// start in the previous calendar year (e.g. 2015-W01 starts 2014-12-29),
    /// in which case the week is assigned to that earlier year.
    pub fn fiscal_year(&self) -> i32 {
        self.start_date()
            .map(|d| d.year())
            .unwrap_or(self.year)
    }

    /// The week `offset` weeks after (`offset < 0`: before) this one.
    pub fn offset(&self, offset: i64) -> Option<WeekId> {
        let start = self.start_date()?;
        let shifted = start.checked_add_signed(Duration::weeks(offset))?;
        let iso = shifted.iso_week();
        Some(WeekId {
            year: iso.year(),
            week: iso.week() as u8,
        })
    }
}

impl fmt::Display for WeekId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-W{:02}", self.year, self.week)
    }
}

impl FromStr for WeekId {
    type Err = WeekParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || WeekParseError(s.to_string());
        let (year_part, week_part) = s.split_once("-W").ok_or_else(err)?;
        let year: i32 = year_part.parse().map_err(|_| err())?;
        let week: u8 = week_part.parse().map_err(|_| err())?;
        WeekId::new(year, week).map_err(|_| err())
    }
}
