//! Daily-grid time series with an observed/missing mask.
//!
//! Positions are zero-based in every slice; the model time of position `i`
//! is `t = i + 1`, so the grid covers `t = 1..=T`. Values at missing
//! positions are stored as `0.0` and are never read: everything downstream
//! multiplies by (or branches on) the mask.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Grid step in fractional years for a daily grid.
pub const DAILY_STEP: f64 = 1.0 / DAYS_PER_YEAR;

const MISSING: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    values: Vec<f64>,
    mask: Vec<bool>,
    t0: NaiveDate,
    grid_step: f64,
}

impl ObservedSeries {
    /// Builds a series, zeroing the carried value at every masked position.
    pub fn new(values: Vec<f64>, mask: Vec<bool>, t0: NaiveDate) -> Result<Self> {
        Self::with_step(values, mask, t0, DAILY_STEP)
    }

    pub fn with_step(mut values: Vec<f64>, mask: Vec<bool>, t0: NaiveDate, grid_step: f64) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                actual: mask.len(),
            });
        }
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::invalid("grid step must be positive"));
        }
        let mut observed = 0;
        for (v, &m) in values.iter_mut().zip(&mask) {
            if m {
                if !v.is_finite() {
                    return Err(Error::invalid("observed values must be finite"));
                }
                observed += 1;
            } else {
                *v = MISSING;
            }
        }
        if values.len() < 2 || observed < 2 {
            return Err(Error::TooFewObserved);
        }
        Ok(Self {
            values,
            mask,
            t0,
            grid_step,
        })
    }

    /// Fully observed series starting at an arbitrary reference date.
    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(values, mask, reference_date())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn t0(&self) -> NaiveDate {
        self.t0
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn observed_fraction(&self) -> f64 {
        self.observed_count() as f64 / self.len() as f64
    }

    /// Value at position `i`, or `None` when masked.
    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.values[i])
    }

    /// Same grid and mask, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        Self::with_step(values, self.mask.clone(), self.t0, self.grid_step)
    }

    pub fn time_index(&self) -> TimeIndex {
        TimeIndex::new(self.len(), self.t0, self.grid_step)
    }

    /// Calendar time in fractional years of position `i`.
    pub fn calendar(&self, i: usize) -> f64 {
        fractional_year(self.t0) + i as f64 * self.grid_step
    }

    /// Calendar date of position `i` on a daily grid.
    pub fn date(&self, i: usize) -> NaiveDate {
        self.t0 + chrono::Duration::days(i as i64)
    }

    /// Position of `date` on the grid, if it falls inside it.
    pub fn position_of(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.t0).num_days();
        (d >= 0 && (d as usize) < self.len()).then_some(d as usize)
    }

    /// Writes the canonical `date,value,observed` CSV.
    pub fn write_canonical_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "value", "observed"])?;
        for i in 0..self.len() {
            let date = self.date(i).format("%Y-%m-%d").to_string();
            match self.get(i) {
                Some(v) => w.write_record([date, format!("{v}"), "1".into()])?,
                None => w.write_record([date, String::new(), "0".into()])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Rescaled and calendar time for every grid position.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeIndex {
    /// `t / T` for `t = 1..=T`.
    pub rescaled: Vec<f64>,
    /// Fractional years.
    pub calendar: Vec<f64>,
}

impl TimeIndex {
    pub fn new(len: usize, t0: NaiveDate, grid_step: f64) -> Self {
        let n = len as f64;
        let start = fractional_year(t0);
        Self {
            rescaled: (1..=len).map(|t| t as f64 / n).collect(),
            calendar: (0..len).map(|i| start + i as f64 * grid_step).collect(),
        }
    }
}

/// Fractional year with a uniform 365.25-day year.
pub fn fractional_year(date: NaiveDate) -> f64 {
    date.year() as f64 + f64::from(date.ordinal0()) / DAYS_PER_YEAR
}

/// Inverse of [`fractional_year`] rounded to the nearest day.
pub fn date_from_fractional_year(year: f64) -> NaiveDate {
    let whole = year.floor();
    let start = NaiveDate::from_yo_opt(whole as i32, 1).unwrap_or_else(reference_date);
    let days = ((year - whole) * DAYS_PER_YEAR).round() as i64;
    start + chrono::Duration::days(days)
}

/// Start date given to simulated and synthetic series.
pub fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

/// Parses `YYYY-MM-DD`, or a datetime whose time part is dropped.
pub fn parse_date(raw: &str) -> Result<NaiveDate> {
    let s = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.date());
        }
    }
    // Fractional seconds or a trailing zone designator.
    if s.len() > 10 && s.is_char_boundary(10) {
        if let Ok(d) = NaiveDate::parse_from_str(&s[..10], "%Y-%m-%d") {
            let rest = &s[10..];
            if rest.starts_with('T') || rest.starts_with(' ') {
                return Ok(d);
            }
        }
    }
    Err(Error::invalid(format!("unparseable date {raw:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub len: usize,
    pub observed: usize,
    pub observed_fraction: f64,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
}

impl IngestSummary {
    pub fn of(series: &ObservedSeries) -> Self {
        Self {
            len: series.len(),
            observed: series.observed_count(),
            observed_fraction: series.observed_fraction(),
            first_date: series.t0(),
            last_date: series.date(series.len() - 1),
        }
    }
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    date_column: &str,
    value_column: &str,
) -> Result<(ObservedSeries, IngestSummary)> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, date_column, value_column)
}

/// Reads rows of (date, value), averages duplicate dates and lays the
/// result on the complete daily grid between the first and last observed
/// date. Rows with an empty value cell are treated as missing days.
pub fn ingest_reader<R: Read>(
    reader: R,
    date_column: &str,
    value_column: &str,
) -> Result<(ObservedSeries, IngestSummary)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("column {name:?} not found")))
    };
    let date_idx = find(date_column)?;
    let value_idx = find(value_column)?;

    let mut days: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    let mut rows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        rows += 1;
        let raw_value = record.get(value_idx).unwrap_or("");
        if raw_value.is_empty() {
            continue;
        }
        let date = parse_date(record.get(date_idx).unwrap_or(""))?;
        let value: f64 = raw_value.parse().map_err(|_| {
            Error::invalid(format!(
                "unparseable value {raw_value:?} on data row {}",
                line + 1
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite value on data row {}",
                line + 1
            )));
        }
        let slot = days.entry(date).or_insert((0.0, 0));
        slot.0 += value;
        slot.1 += 1;
    }
    if rows == 0 {
        return Err(Error::invalid("empty file"));
    }
    if days.len() < 2 {
        return Err(Error::TooFewObserved);
    }

    let first = *days.keys().next().expect("non-empty");
    let last = *days.keys().next_back().expect("non-empty");
    let len = (last - first).num_days() as usize + 1;
    let mut values = vec![MISSING; len];
    let mut mask = vec![false; len];
    for (date, (sum, count)) in &days {
        let i = (*date - first).num_days() as usize;
        values[i] = if *count == 1 { *sum } else { sum / *count as f64 };
        mask[i] = true;
    }
    let series = ObservedSeries::new(values, mask, first)?;
    let summary = IngestSummary::of(&series);
    Ok((series, summary))
}

/// Zero-based positions and values of the observed points, in order.
pub fn observed_subset(s: &ObservedSeries) -> (Vec<usize>, Vec<f64>) {
    s.mask()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (i, s.values()[i]))
        .unzip()
}
