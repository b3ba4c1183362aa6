//! Deterministic intra-annual seasonality as a Fourier series in calendar time.
//!
//! Harmonic `j` has period `1/j` years, with phase measured in fractional
//! calendar years so that one cycle completes every year regardless of where
//! the grid starts.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::series::ObservedSeries;

pub const DEFAULT_HARMONICS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalFit {
    pub harmonics: usize,
    /// Cosine coefficients, one per harmonic.
    pub a: Vec<f64>,
    /// Sine coefficients, one per harmonic.
    pub b: Vec<f64>,
    /// Seasonal component on the full grid.
    pub fitted: Vec<f64>,
    /// Coefficients of any extra (trend) regressors fitted jointly.
    pub extra: Vec<f64>,
}

impl SeasonalFit {
    /// The empty seasonal model.
    pub fn none(len: usize) -> Self {
        Self {
            harmonics: 0,
            a: Vec::new(),
            b: Vec::new(),
            fitted: vec![0.0; len],
            extra: Vec::new(),
        }
    }

    /// Evaluates the fitted series at a calendar time.
    pub fn evaluate(&self, year: f64) -> f64 {
        let phase = year - year.floor();
        (0..self.harmonics)
            .map(|j| {
                let w = TAU * (j + 1) as f64 * phase;
                self.a[j] * w.cos() + self.b[j] * w.sin()
            })
            .sum()
    }
}

/// Fourier regressors `cos(2jπ·year), sin(2jπ·year)` for `j = 1..=harmonics`,
/// interleaved cosine-first.
pub fn fourier_columns(s: &ObservedSeries, harmonics: usize) -> Vec<Vec<f64>> {
    let phases: Vec<f64> = (0..s.len())
        .map(|i| {
            let y = s.calendar(i);
            y - y.floor()
        })
        .collect();
    let mut cols = Vec::with_capacity(2 * harmonics);
    for j in 1..=harmonics {
        let f = TAU * j as f64;
        cols.push(phases.iter().map(|p| (f * p).cos()).collect());
        cols.push(phases.iter().map(|p| (f * p).sin()).collect());
    }
    cols
}

/// Splits the trailing Fourier coefficients of a joint fit into a [`SeasonalFit`].
pub(crate) fn split_fourier(
    coefficients: &[f64],
    n_extra: usize,
    harmonics: usize,
    columns: &[Vec<f64>],
) -> SeasonalFit {
    let len = columns.first().map_or(0, Vec::len);
    let mut fitted = vec![0.0; len];
    let mut a = Vec::with_capacity(harmonics);
    let mut b = Vec::with_capacity(harmonics);
    for j in 0..harmonics {
        let (ca, cb) = (coefficients[n_extra + 2 * j], coefficients[n_extra + 2 * j + 1]);
        a.push(ca);
        b.push(cb);
        let (xa, xb) = (&columns[n_extra + 2 * j], &columns[n_extra + 2 * j + 1]);
        for i in 0..len {
            fitted[i] += ca * xa[i] + cb * xb[i];
        }
    }
    SeasonalFit {
        harmonics,
        a,
        b,
        fitted,
        extra: coefficients[..n_extra].to_vec(),
    }
}

/// Least-squares seasonal fit over the observed points, estimated jointly
/// with any `extra` columns (e.g. intercept and trend).
pub fn fit_seasonal(s: &ObservedSeries, extra: &[Vec<f64>], harmonics: usize) -> Result<SeasonalFit> {
    if harmonics == 0 && extra.is_empty() {
        return Ok(SeasonalFit::none(s.len()));
    }
    let p = 2 * harmonics + extra.len();
    if s.observed_count() <= p {
        return Err(Error::invalid(format!(
            "{} observed points cannot identify {p} seasonal/trend coefficients",
            s.observed_count()
        )));
    }
    let mut columns = extra.to_vec();
    columns.extend(fourier_columns(s, harmonics));
    let ls = LeastSquares::new(columns, s.mask())?;
    let fit = ls.fit(s.values());
    Ok(split_fourier(
        &fit.coefficients,
        extra.len(),
        harmonics,
        ls.columns(),
    ))
}

/// Residuals `M_t (y_t - s_t)`; the mask is unchanged.
pub fn deseasonalize(s: &ObservedSeries, f: &SeasonalFit) -> Result<ObservedSeries> {
    if f.fitted.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            actual: f.fitted.len(),
        });
    }
    let values = s
        .values()
        .iter()
        .zip(&f.fitted)
        .zip(s.mask())
        .map(|((y, f), &m)| if m { y - f } else { 0.0 })
        .collect();
    s.with_values(values)
}
