//! Continuous broken linear trend with one unknown break date.
//!
//! The trend is `α + β t + δ D(t, T₁)` with `D(t, T₁) = max(t − T₁, 0)`, so
//! the slope changes from `β` to `β + δ` at `T₁` without a jump. Seasonal
//! Fourier terms are always estimated jointly with the trend.
//!
//! The break-date search profiles the residual sum of squares over every
//! candidate of the trimming set. Adding the hinge column to the no-break
//! design lowers the SSR by `(rᵀd)² / (dᵀ M₀ d)`, where `r` are the no-break
//! residuals and `M₀` the annihilator of the no-break design on the observed
//! rows. The denominators depend only on the mask, so they are computed once
//! and shared by every bootstrap replicate; each scan is then a single
//! backward pass over the grid.

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::awb::{self, AwbConfig};
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::seasonal::{fourier_columns, split_fourier, SeasonalFit};
use crate::series::ObservedSeries;

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Admissible break dates `[⌈λT⌉, ⌊(1−λ)T⌋]`, as one-based model times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmingSet {
    pub lambda: f64,
    pub first: usize,
    pub last: usize,
}

impl TrimmingSet {
    pub fn new(lambda: f64, len: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(Error::invalid(format!(
                "lambda must lie in (0, 0.5), got {lambda}"
            )));
        }
        let n = len as f64;
        let first = ((lambda * n) - 1e-9).ceil().max(1.0) as usize;
        let last = (((1.0 - lambda) * n) + 1e-9).floor() as usize;
        let last = last.min(len.saturating_sub(1));
        if first > last {
            return Err(Error::invalid(format!(
                "trimming with lambda = {lambda} leaves no candidate break dates for T = {len}"
            )));
        }
        Ok(Self { lambda, first, last })
    }

    pub fn candidates(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn count(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn contains(&self, time: usize) -> bool {
        (self.first..=self.last).contains(&time)
    }

    /// Both ends must leave at least `params + 1` observations on each side.
    fn check_support(&self, mask: &[bool], params: usize) -> Result<()> {
        let before = mask[..self.first].iter().filter(|&&m| m).count();
        let after = mask[self.last..].iter().filter(|&&m| m).count();
        if before <= params || after <= params {
            return Err(Error::invalid(format!(
                "trimming set [{}, {}] leaves {before} observations before and {after} after; \
                 at least {} are needed on each side",
                self.first,
                self.last,
                params + 1
            )));
        }
        Ok(())
    }
}

/// `max(t − break_time, 0)` for `t = 1..=len`.
pub fn hinge(len: usize, break_time: usize) -> Vec<f64> {
    (1..=len)
        .map(|t| {
            if t > break_time {
                (t - break_time) as f64
            } else {
                0.0
            }
        })
        .collect()
}

fn trend_columns(len: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0; len], (1..=len).map(|t| t as f64).collect()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokenTrendFit {
    pub alpha: f64,
    /// Pre-break slope per grid step.
    pub beta: f64,
    /// Slope change per grid step.
    pub delta: f64,
    /// One-based model time of the break.
    pub break_time: usize,
    pub seasonal: SeasonalFit,
    pub ssr: f64,
    /// Grid step in years, for per-year slopes.
    pub grid_step: f64,
}

impl BrokenTrendFit {
    pub fn trend_at(&self, time: usize) -> f64 {
        let d = time.saturating_sub(self.break_time) as f64;
        self.alpha + self.beta * time as f64 + self.delta * d
    }

    pub fn trend(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|t| self.trend_at(t)).collect()
    }

    /// Trend plus seasonal component on the full grid.
    pub fn fitted(&self) -> Vec<f64> {
        self.seasonal
            .fitted
            .iter()
            .enumerate()
            .map(|(i, s)| self.trend_at(i + 1) + s)
            .collect()
    }

    pub fn beta_per_year(&self) -> f64 {
        self.beta / self.grid_step
    }

    pub fn delta_per_year(&self) -> f64 {
        self.delta / self.grid_step
    }

    pub fn post_slope_per_year(&self) -> f64 {
        (self.beta + self.delta) / self.grid_step
    }
}

/// Joint OLS of `y` on `{1, t, D(t, break_time), Fourier(harmonics)}`.
pub fn fit_given_break(s: &ObservedSeries, break_time: usize, harmonics: usize) -> Result<BrokenTrendFit> {
    let ls = break_design(s, break_time, harmonics)?;
    let fit = ls.fit(s.values());
    Ok(assemble_fit(
        &fit.coefficients,
        fit.ssr,
        break_time,
        harmonics,
        &ls,
        s.grid_step(),
    ))
}

fn break_design(s: &ObservedSeries, break_time: usize, harmonics: usize) -> Result<LeastSquares> {
    if break_time == 0 || break_time >= s.len() {
        return Err(Error::invalid(format!(
            "break time {break_time} outside 1..{}",
            s.len() - 1
        )));
    }
    let mut cols = trend_columns(s.len());
    cols.push(hinge(s.len(), break_time));
    cols.extend(fourier_columns(s, harmonics));
    LeastSquares::new(cols, s.mask())
}

fn assemble_fit(
    coef: &[f64],
    ssr: f64,
    break_time: usize,
    harmonics: usize,
    ls: &LeastSquares,
    grid_step: f64,
) -> BrokenTrendFit {
    BrokenTrendFit {
        alpha: coef[0],
        beta: coef[1],
        delta: coef[2],
        break_time,
        seasonal: split_fourier(coef, 3, harmonics, ls.columns()),
        ssr,
        grid_step,
    }
}

/// Linear trend plus seasonality without a break (the null model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrendFit {
    pub alpha: f64,
    pub beta: f64,
    pub seasonal: SeasonalFit,
    pub ssr: f64,
}

/// Result of profiling the SSR over the trimming set for one response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOutcome {
    /// SSR of the no-break model.
    pub ssr_null: f64,
    /// Minimizing candidate (smallest on ties).
    pub break_time: usize,
    /// SSR at the minimizing candidate.
    pub ssr_break: f64,
    /// `ssr_null − ssr_break`, the sup-F statistic.
    pub statistic: f64,
}

/// Precomputed Λ-scan for one mask and seasonal specification.
#[derive(Debug, Clone)]
pub struct BreakScanner {
    null: LeastSquares,
    trim: TrimmingSet,
    harmonics: usize,
    len: usize,
    mask: Vec<bool>,
    /// `dᵀM₀d` per candidate; `None` where the hinge column is collinear
    /// with the no-break design.
    denominators: Vec<Option<f64>>,
}

impl BreakScanner {
    pub fn new(s: &ObservedSeries, trim: TrimmingSet, harmonics: usize) -> Result<Self> {
        let len = s.len();
        if trim.last >= len {
            return Err(Error::invalid("trimming set extends past the end of the series"));
        }
        let mut cols = trend_columns(len);
        cols.extend(fourier_columns(s, harmonics));
        let params = cols.len() + 1;
        trim.check_support(s.mask(), params)?;
        let null = LeastSquares::new(cols, s.mask())?;
        let denominators = Self::denominators(&null, s.mask(), &trim);
        let skipped = denominators.iter().filter(|d| d.is_none()).count();
        if skipped == trim.count() {
            return Err(Error::Singular(
                "every candidate break date gives a rank-deficient design".into(),
            ));
        }
        if skipped > 0 {
            warn!("{skipped} candidate break dates skipped: rank-deficient design");
        }
        Ok(Self {
            null,
            trim,
            harmonics,
            len,
            mask: s.mask().to_vec(),
            denominators,
        })
    }

    fn denominators(null: &LeastSquares, mask: &[bool], trim: &TrimmingSet) -> Vec<Option<f64>> {
        let len = mask.len();
        let p = null.n_params();
        let q = null.q();
        // Row of Q for each observed position.
        let mut qrow = vec![usize::MAX; len];
        for (r, &i) in null.rows().iter().enumerate() {
            qrow[i] = r;
        }
        let mut out = vec![None; trim.count()];
        // Backward recursions over the candidate c (one-based):
        //   N(c) = #obs t > c, L(c) = Σ (t − c), A(c) = Σ (t − c)²,
        //   S(c) = Σ q_t,      G(c) = Σ q_t (t − c).
        let (mut n_c, mut l_c, mut a_c) = (0.0f64, 0.0f64, 0.0f64);
        let mut s_c = vec![0.0; p];
        let mut g_c = vec![0.0; p];
        for c in (trim.first..len).rev() {
            // Position c holds time c + 1.
            let l_next = l_c;
            if mask[c] {
                n_c += 1.0;
                let r = qrow[c];
                for (k, s) in s_c.iter_mut().enumerate() {
                    *s += q[(r, k)];
                }
            }
            l_c = l_next + n_c;
            a_c += 2.0 * l_next + n_c;
            for k in 0..p {
                g_c[k] += s_c[k];
            }
            if c <= trim.last {
                let proj: f64 = g_c.iter().map(|g| g * g).sum();
                let den = a_c - proj;
                out[c - trim.first] = (a_c > 0.0 && den > 1e-10 * a_c).then_some(den);
            }
        }
        out
    }

    pub fn trimming(&self) -> &TrimmingSet {
        &self.trim
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Candidates skipped for rank deficiency.
    pub fn skipped(&self) -> Vec<usize> {
        self.trim
            .candidates()
            .zip(&self.denominators)
            .filter(|(_, d)| d.is_none())
            .map(|(c, _)| c)
            .collect()
    }

    pub fn null_design(&self) -> &LeastSquares {
        &self.null
    }

    /// SSR reduction from adding the hinge at each admissible candidate.
    fn improvements(&self, y: &[f64]) -> (f64, Vec<Option<f64>>, f64) {
        let fit = self.null.fit(y);
        let r = &fit.residuals;
        let mask = &self.mask;
        let mut improvements = vec![None; self.trim.count()];
        let (mut tail, mut cross) = (0.0f64, 0.0f64);
        for c in (self.trim.first..self.len).rev() {
            if mask[c] {
                tail += r[c];
            }
            cross += tail;
            if c <= self.trim.last {
                let k = c - self.trim.first;
                improvements[k] = self.denominators[k].map(|den| cross * cross / den);
            }
        }
        (fit.ssr, improvements, self.rounding_floor(y))
    }

    /// SSR differences below this are indistinguishable from rounding.
    fn rounding_floor(&self, y: &[f64]) -> f64 {
        let rows = self.null.rows();
        let n = rows.len() as f64;
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
        let centered: f64 = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        16.0 * f64::EPSILON * n * centered
    }

    pub fn scan(&self, y: &[f64]) -> ScanOutcome {
        let (ssr_null, improvements, floor) = self.improvements(y);
        let mut best = (self.trim.first, f64::NEG_INFINITY);
        for (c, imp) in self.trim.candidates().zip(&improvements) {
            if let Some(v) = imp {
                if *v > best.1 {
                    best = (c, *v);
                }
            }
        }
        let statistic = if best.1 <= floor { 0.0 } else { best.1 };
        ScanOutcome {
            ssr_null,
            break_time: best.0,
            ssr_break: (ssr_null - statistic).max(0.0),
            statistic,
        }
    }

    /// `(candidate, SSR)` for every admissible candidate.
    pub fn profile(&self, y: &[f64]) -> Vec<(usize, f64)> {
        let (ssr_null, improvements, _) = self.improvements(y);
        self.trim
            .candidates()
            .zip(improvements)
            .filter_map(|(c, imp)| imp.map(|v| (c, ssr_null - v)))
            .collect()
    }

    /// Linear trend plus seasonality without a break.
    pub fn null_fit(&self, y: &[f64]) -> (LinearTrendFit, Vec<f64>, Vec<f64>) {
        let fit = self.null.fit(y);
        let seasonal = split_fourier(&fit.coefficients, 2, self.harmonics, self.null.columns());
        (
            LinearTrendFit {
                alpha: fit.coefficients[0],
                beta: fit.coefficients[1],
                seasonal,
                ssr: fit.ssr,
            },
            fit.fitted,
            fit.residuals,
        )
    }
}

/// Exhaustive break-date search; returns the SSR-minimizing fit.
pub fn estimate_break(s: &ObservedSeries, trim: &TrimmingSet, harmonics: usize) -> Result<BrokenTrendFit> {
    let scanner = BreakScanner::new(s, *trim, harmonics)?;
    estimate_with(&scanner, s)
}

pub fn estimate_with(scanner: &BreakScanner, s: &ObservedSeries) -> Result<BrokenTrendFit> {
    let outcome = scanner.scan(s.values());
    fit_given_break(s, outcome.break_time, scanner.harmonics())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakTestResult {
    pub statistic: f64,
    pub bootstrap_stats: Vec<f64>,
    pub critical_value: f64,
    pub p_value: f64,
    /// Nominal size used for `critical_value`.
    pub alpha: f64,
    pub reject: bool,
}

/// Sup-F break test with AWB critical values; bootstrap samples are
/// generated from the no-break fit.
pub fn break_test(
    s: &ObservedSeries,
    trim: &TrimmingSet,
    cfg: &AwbConfig,
    harmonics: usize,
    alpha: f64,
) -> Result<BreakTestResult> {
    let scanner = BreakScanner::new(s, *trim, harmonics)?;
    break_test_with(&scanner, s, cfg, alpha)
}

pub fn break_test_with(
    scanner: &BreakScanner,
    s: &ObservedSeries,
    cfg: &AwbConfig,
    alpha: f64,
) -> Result<BreakTestResult> {
    check_level(1.0 - alpha)?;
    cfg.validate()?;
    let statistic = scanner.scan(s.values()).statistic;
    let (_, fitted, residuals) = scanner.null_fit(s.values());
    let bootstrap_stats = awb::run_replicates(cfg.replicates, |b| {
        let y = regenerate(&fitted, &residuals, s.mask(), cfg, b);
        Ok(scanner.scan(&y).statistic)
    })?;
    let critical_value = awb::quantile(&bootstrap_stats, 1.0 - alpha);
    let p_value = awb::upper_p_value(statistic, &bootstrap_stats);
    Ok(BreakTestResult {
        statistic,
        critical_value,
        p_value,
        alpha,
        reject: statistic > critical_value,
        bootstrap_stats,
    })
}

/// `y*_t = M_t (fitted_t + ξ*_t û_t)`.
fn regenerate(
    fitted: &[f64],
    residuals: &[f64],
    mask: &[bool],
    cfg: &AwbConfig,
    replicate: usize,
) -> Vec<f64> {
    let xi = awb::draw_multipliers(cfg, fitted.len(), replicate);
    fitted
        .iter()
        .zip(residuals)
        .zip(mask)
        .zip(xi.as_slice())
        .map(|(((f, u), &m), x)| if m { f + x * u } else { 0.0 })
        .collect()
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    Ok(())
}

/// A bootstrap interval in model time, with its calendar image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakCi {
    pub level: f64,
    pub estimate: usize,
    pub lower: f64,
    pub upper: f64,
    pub lower_year: f64,
    pub upper_year: f64,
    pub estimate_year: f64,
    pub lower_date: NaiveDate,
    pub upper_date: NaiveDate,
    pub estimate_date: NaiveDate,
    pub bootstrap_times: Vec<usize>,
}

/// Model time `t` (one-based, possibly off-grid) to fractional years.
fn time_to_year(s: &ObservedSeries, t: f64) -> f64 {
    s.calendar(0) + (t - 1.0) * s.grid_step()
}

fn time_to_date(s: &ObservedSeries, t: f64) -> NaiveDate {
    s.t0() + chrono::Duration::days((t - 1.0).round() as i64)
}

/// `[θ̂ − q(1−α/2), θ̂ − q(α/2)]` from centered bootstrap draws.
fn centered_interval(estimate: f64, draws: &[f64], level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let centered: Vec<f64> = draws.iter().map(|d| d - estimate).collect();
    let sorted = awb::sorted(&centered);
    let lo = awb::quantile_sorted(&sorted, alpha / 2.0);
    let hi = awb::quantile_sorted(&sorted, 1.0 - alpha / 2.0);
    (estimate - hi, estimate - lo)
}

/// AWB confidence interval for the break date; bootstrap samples keep the
/// estimated break and each replicate re-runs the full Λ-scan.
pub fn break_ci(
    s: &ObservedSeries,
    fit: &BrokenTrendFit,
    trim: &TrimmingSet,
    cfg: &AwbConfig,
    level: f64,
) -> Result<BreakCi> {
    let scanner = BreakScanner::new(s, *trim, fit.seasonal.harmonics)?;
    break_ci_with(&scanner, s, fit, cfg, level)
}

pub fn break_ci_with(
    scanner: &BreakScanner,
    s: &ObservedSeries,
    fit: &BrokenTrendFit,
    cfg: &AwbConfig,
    level: f64,
) -> Result<BreakCi> {
    check_level(level)?;
    cfg.validate()?;
    let (fitted, residuals) = break_residuals(s, fit);
    let times = awb::run_replicates(cfg.replicates, |b| {
        let y = regenerate(&fitted, &residuals, s.mask(), cfg, b);
        Ok(scanner.scan(&y).break_time)
    })?;
    let draws: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let estimate = fit.break_time as f64;
    let (lower, upper) = centered_interval(estimate, &draws, level);
    Ok(BreakCi {
        level,
        estimate: fit.break_time,
        lower,
        upper,
        lower_year: time_to_year(s, lower),
        upper_year: time_to_year(s, upper),
        estimate_year: time_to_year(s, estimate),
        lower_date: time_to_date(s, lower),
        upper_date: time_to_date(s, upper),
        estimate_date: time_to_date(s, estimate),
        bootstrap_times: times,
    })
}

fn break_residuals(s: &ObservedSeries, fit: &BrokenTrendFit) -> (Vec<f64>, Vec<f64>) {
    let fitted = fit.fitted();
    let residuals = s
        .values()
        .iter()
        .zip(&fitted)
        .zip(s.mask())
        .map(|((y, f), &m)| if m { y - f } else { 0.0 })
        .collect();
    (fitted, residuals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    fn scaled(self, k: f64) -> Self {
        Self {
            estimate: self.estimate * k,
            lower: self.lower * k,
            upper: self.upper * k,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Intercept, slopes per year and post-break slope per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCis {
    pub level: f64,
    pub alpha: Interval,
    pub beta: Interval,
    pub delta: Interval,
    pub post_slope: Interval,
}

/// AWB intervals for the trend coefficients with the break held at the
/// original estimate.
pub fn slope_cis(s: &ObservedSeries, fit: &BrokenTrendFit, cfg: &AwbConfig, level: f64) -> Result<SlopeCis> {
    check_level(level)?;
    cfg.validate()?;
    let ls = break_design(s, fit.break_time, fit.seasonal.harmonics)?;
    let (fitted, residuals) = break_residuals(s, fit);
    let draws = awb::run_replicates(cfg.replicates, |b| {
        let y = regenerate(&fitted, &residuals, s.mask(), cfg, b);
        let c = ls.coefficients(&y);
        Ok([c[0], c[1], c[2], c[1] + c[2]])
    })?;
    let column = |k: usize| draws.iter().map(|d| d[k]).collect::<Vec<_>>();
    let interval = |estimate: f64, k: usize| {
        let (lower, upper) = centered_interval(estimate, &column(k), level);
        Interval {
            estimate,
            lower,
            upper,
        }
    };
    let per_year = 1.0 / fit.grid_step;
    Ok(SlopeCis {
        level,
        alpha: interval(fit.alpha, 0),
        beta: interval(fit.beta, 1).scaled(per_year),
        delta: interval(fit.delta, 2).scaled(per_year),
        post_slope: interval(fit.beta + fit.delta, 3).scaled(per_year),
    })
}

/// Refits from scratch at every candidate; the reference the scanner is
/// checked against.
pub fn naive_profile(
    s: &ObservedSeries,
    trim: &TrimmingSet,
    harmonics: usize,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let mut cols = trend_columns(s.len());
    cols.extend(fourier_columns(s, harmonics));
    let ssr_null = LeastSquares::new(cols, s.mask())?.fit(s.values()).ssr;
    let mut out = Vec::new();
    for c in trim.candidates() {
        if let Ok(ls) = break_design(s, c, harmonics) {
            out.push((c, ls.fit(s.values()).ssr));
        }
    }
    Ok((ssr_null, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinked(len: usize, kink: usize, alpha: f64, beta: f64, delta: f64) -> Vec<f64> {
        (1..=len)
            .map(|t| alpha + beta * t as f64 + delta * t.saturating_sub(kink) as f64)
            .collect()
    }

    #[test]
    fn trimming_bounds() {
        let t = TrimmingSet::new(0.1, 100).unwrap();
        assert_eq!((t.first, t.last), (10, 90));
        let t = TrimmingSet::new(0.1, 285).unwrap();
        assert_eq!((t.first, t.last), (29, 256));
        assert!(TrimmingSet::new(0.5, 100).is_err());
        assert!(TrimmingSet::new(0.0, 100).is_err());
    }

    #[test]
    fn exact_fit_at_true_break() {
        let s = ObservedSeries::complete(kinked(100, 60, 1.0, 0.5, 0.3)).unwrap();
        let fit = fit_given_break(&s, 60, 0).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-8);
        assert!((fit.beta - 0.5).abs() < 1e-8);
        assert!((fit.delta - 0.3).abs() < 1e-8);
        assert!(fit.ssr < 1e-8);
        let wrong = fit_given_break(&s, 50, 0).unwrap();
        assert!(wrong.ssr > 1e-3);
    }

    #[test]
    fn scan_finds_the_kink() {
        let s = ObservedSeries::complete(kinked(100, 60, 1.0, 0.5, 0.3)).unwrap();
        let trim = TrimmingSet::new(0.1, 100).unwrap();
        let fit = estimate_break(&s, &trim, 0).unwrap();
        assert_eq!(fit.break_time, 60);
    }

    #[test]
    fn linear_series_has_zero_statistic_and_unit_p_value() {
        let s = ObservedSeries::complete(kinked(120, 0, 3.0, -0.2, 0.0)).unwrap();
        let trim = TrimmingSet::new(0.1, 120).unwrap();
        let cfg = AwbConfig::new(120, 0.1, 49, 1).unwrap();
        let r = break_test(&s, &trim, &cfg, 0, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
    }

    #[test]
    fn support_check_rejects_thin_ends() {
        let len = 100;
        let mut mask = vec![true; len];
        for m in mask.iter_mut().take(12) {
            *m = false;
        }
        let s = ObservedSeries::new(vec![1.0; len], mask, crate::series::reference_date()).unwrap();
        let trim = TrimmingSet::new(0.1, len).unwrap();
        assert!(matches!(
            BreakScanner::new(&s, trim, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gap_inside_trimming_range() {
        let len = 100;
        let mut mask = vec![true; len];
        // Nothing observed at times 85..=90.
        for m in mask.iter_mut().take(90).skip(84) {
            *m = false;
        }
        let y = kinked(len, 40, 0.0, 1.0, -0.5);
        let s = ObservedSeries::new(y, mask, crate::series::reference_date()).unwrap();
        let trim = TrimmingSet::new(0.1, len).unwrap();
        let scanner = BreakScanner::new(&s, trim, 0).unwrap();
        assert!(scanner.skipped().is_empty());
        assert_eq!(scanner.scan(s.values()).break_time, 40);
    }

    #[test]
    fn noiseless_break_ci_is_degenerate() {
        let s = ObservedSeries::complete(kinked(150, 80, 2.0, -0.4, 0.9)).unwrap();
        let trim = TrimmingSet::new(0.1, 150).unwrap();
        let fit = estimate_break(&s, &trim, 0).unwrap();
        let cfg = AwbConfig::new(150, 0.1, 19, 3).unwrap();
        let ci = break_ci(&s, &fit, &trim, &cfg, 0.95).unwrap();
        assert_eq!(ci.lower, 80.0);
        assert_eq!(ci.upper, 80.0);
        assert!(ci.bootstrap_times.iter().all(|&t| t == 80));

        let sc = slope_cis(&s, &fit, &cfg, 0.95).unwrap();
        let per_year = crate::series::DAYS_PER_YEAR;
        for (iv, truth) in [
            (sc.alpha, 2.0),
            (sc.beta, -0.4 * per_year),
            (sc.delta, 0.9 * per_year),
            (sc.post_slope, 0.5 * per_year),
        ] {
            assert!(iv.width().abs() < 1e-6, "{iv:?}");
            assert!((iv.estimate - truth).abs() < 1e-6, "{iv:?}");
        }
    }
}
