//! Shared month coordinate. Month index 0 is June 2018.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPOCH_YEAR: i32 = 2018;
const EPOCH_MONTH: i32 = 6;

/// A calendar month as an offset from the epoch (2018-06 = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Month(pub i32);

impl Month {
    pub fn from_ym(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month of year out of range: {month}");
        Month((year - EPOCH_YEAR) * 12 + month as i32 - EPOCH_MONTH)
    }

    pub fn index(self) -> i32 {
        self.0
    }

    fn absolute(self) -> i32 {
        EPOCH_YEAR * 12 + (EPOCH_MONTH - 1) + self.0
    }

    pub fn year(self) -> i32 {
        self.absolute().div_euclid(12)
    }

    /// 1..=12
    pub fn month_of_year(self) -> u32 {
        (self.absolute().rem_euclid(12) + 1) as u32
    }

    /// 1..=4
    pub fn quarter(self) -> u32 {
        (self.month_of_year() - 1) / 3 + 1
    }

    pub fn offset(self, months: i32) -> Self {
        Month(self.0 + months)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month_of_year())
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidPeriod(s.to_string()))?;
        let year: i32 = y.parse().map_err(|_| Error::InvalidPeriod(s.to_string()))?;
        let month: u32 = m.parse().map_err(|_| Error::InvalidPeriod(s.to_string()))?;
        if y.len() != 4 || m.len() != 2 || !(1..=12).contains(&month) {
            return Err(Error::InvalidPeriod(s.to_string()));
        }
        Ok(Month::from_ym(year, month))
    }
}

/// A contiguous run of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthSpan {
    pub start: Month,
    pub len: usize,
}

impl MonthSpan {
    pub fn new(start: Month, len: usize) -> Self {
        Self { start, len }
    }

    /// Inclusive range.
    pub fn between(start: Month, end: Month) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!("span end {end} precedes start {start}")));
        }
        Ok(Self {
            start,
            len: (end.0 - start.0 + 1) as usize,
        })
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.len as i32 - 1)
    }

    pub fn contains(&self, m: Month) -> bool {
        m >= self.start && m.0 < self.start.0 + self.len as i32
    }

    pub fn position(&self, m: Month) -> Option<usize> {
        self.contains(m).then(|| (m.0 - self.start.0) as usize)
    }

    pub fn month(&self, pos: usize) -> Month {
        self.start.offset(pos as i32)
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (0..self.len).map(|i| self.month(i))
    }
}

/// Native period of a source observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Month(Month),
    Quarter { year: i32, quarter: u32 },
    Year(i32),
}

impl Period {
    /// Months covered by the period, in order.
    pub fn months(&self) -> Vec<Month> {
        match *self {
            Period::Month(m) => vec![m],
            Period::Quarter { year, quarter } => {
                let first = Month::from_ym(year, (quarter - 1) * 3 + 1);
                (0..3).map(|i| first.offset(i)).collect()
            }
            Period::Year(year) => {
                let first = Month::from_ym(year, 1);
                (0..12).map(|i| first.offset(i)).collect()
            }
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Month(m) => write!(f, "{m}"),
            Period::Quarter { year, quarter } => write!(f, "{year:04}-Q{quarter}"),
            Period::Year(y) => write!(f, "{y:04}"),
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    /// Accepts `yyyy-mm`, `yyyy-Qn` and `yyyy`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidPeriod(s.to_string());
        if let Some((y, q)) = s.split_once("-Q") {
            let year: i32 = y.parse().map_err(|_| bad())?;
            let quarter: u32 = q.parse().map_err(|_| bad())?;
            if !(1..=4).contains(&quarter) || y.len() != 4 {
                return Err(bad());
            }
            return Ok(Period::Quarter { year, quarter });
        }
        if s.contains('-') {
            return s.parse().map(Period::Month);
        }
        if s.len() == 4 {
            return s.parse().map(Period::Year).map_err(|_| bad());
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_june_2018() {
        let m: Month = "2018-06".parse().unwrap();
        assert_eq!(m, Month(0));
        assert_eq!(Month(54).to_string(), "2022-12");
        assert_eq!(Month(55).to_string(), "2023-01");
        assert_eq!(Month(-1).to_string(), "2018-05");
    }

    #[test]
    fn calendar_fields() {
        let m = Month::from_ym(2023, 11);
        assert_eq!(m.year(), 2023);
        assert_eq!(m.month_of_year(), 11);
        assert_eq!(m.quarter(), 4);
    }

    #[test]
    fn period_parsing() {
        assert_eq!("2019-Q3".parse::<Period>().unwrap().months().len(), 3);
        assert_eq!(
            "2019-Q3".parse::<Period>().unwrap().months()[0],
            Month::from_ym(2019, 7)
        );
        assert_eq!("2020".parse::<Period>().unwrap().months().len(), 12);
        assert!("2020-13".parse::<Period>().is_err());
        assert!("20-01".parse::<Period>().is_err());
        assert!("2020-Q5".parse::<Period>().is_err());
    }

    #[test]
    fn span_of_reference_panel() {
        let span = MonthSpan::between("2018-06".parse().unwrap(), "2022-12".parse().unwrap()).unwrap();
        assert_eq!(span.len, 55);
        assert_eq!(span.position(Month(54)), Some(54));
        assert_eq!(span.position(Month(55)), None);
    }
}
