//! Inference on the shape of the kernel trend: location of an extremum,
//! a test that the trend is linear after the extremum, and two tests of
//! monotonicity.

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::awb::{self, AwbConfig};
use crate::error::{Error, Result};
use crate::kerneltrend::{pilot_bandwidth, trend_bootstrap, KernelTrendFit, Smoother};
use crate::series::ObservedSeries;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

impl ExtremumKind {
    /// Maps values so that the requested extremum becomes a minimum.
    fn orient(self, v: f64) -> f64 {
        match self {
            ExtremumKind::Min => v,
            ExtremumKind::Max => -v,
        }
    }
}

/// Interior local extrema over the defined points, as zero-based grid
/// positions. Runs of equal values count once, at their first position.
pub fn local_extrema(g: &[Option<f64>], kind: ExtremumKind) -> Vec<usize> {
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for (i, v) in g.iter().enumerate() {
        if let Some(v) = v {
            let v = kind.orient(*v);
            if runs.last().is_none_or(|r| r.1 != v) {
                runs.push((i, v));
            }
        }
    }
    runs.windows(3)
        .filter(|w| w[0].1 > w[1].1 && w[2].1 > w[1].1)
        .map(|w| w[1].0)
        .collect()
}

/// Local extremum nearest to `target`; the earlier one on ties.
pub fn nearest_extremum(g: &[Option<f64>], kind: ExtremumKind, target: usize) -> Option<usize> {
    local_extrema(g, kind)
        .into_iter()
        .min_by_key(|&i| (i.abs_diff(target), i))
}

/// Global extremum over the defined points; the earlier one on ties.
fn global_extremum(g: &[Option<f64>], kind: ExtremumKind) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in g.iter().enumerate() {
        if let Some(v) = v {
            let v = kind.orient(*v);
            if best.is_none_or(|b| v < b.1) {
                best = Some((i, v));
            }
        }
    }
    best.map(|b| b.0)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    Ok(())
}

fn check_len(eps: &ObservedSeries, fit: &KernelTrendFit) -> Result<()> {
    if fit.len() != eps.len() {
        return Err(Error::LengthMismatch {
            expected: eps.len(),
            actual: fit.len(),
        });
    }
    Ok(())
}

fn time_to_year(s: &ObservedSeries, t: f64) -> f64 {
    s.calendar(0) + (t - 1.0) * s.grid_step()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumResult {
    pub kind: ExtremumKind,
    /// One-based model time of the extremum.
    pub location: usize,
    pub value: f64,
    pub level: f64,
    pub lower: usize,
    pub upper: usize,
    pub location_year: f64,
    pub lower_year: f64,
    pub upper_year: f64,
    pub location_date: NaiveDate,
    pub lower_date: NaiveDate,
    pub upper_date: NaiveDate,
    /// One-based times of the replicate extrema.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_locations: Vec<usize>,
    /// Replicates without an interior extremum, which fell back to the
    /// global one.
    pub fallbacks: usize,
}

/// One-based time of the global extremum of the trend over its defined
/// points. A trend without any interior local extremum is monotone and is
/// rejected.
pub fn locate_extremum(fit: &KernelTrendFit, kind: ExtremumKind) -> Result<usize> {
    if local_extrema(&fit.g_hat, kind).is_empty() {
        return Err(Error::NoInteriorExtremum(match kind {
            ExtremumKind::Min => "the kernel trend has no interior local minimum",
            ExtremumKind::Max => "the kernel trend has no interior local maximum",
        }));
    }
    Ok(global_extremum(&fit.g_hat, kind).expect("defined points exist") + 1)
}

/// Locates the extremum of the kernel trend and bootstraps its position.
pub fn extremum_ci(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    cfg: &AwbConfig,
    kind: ExtremumKind,
    level: f64,
) -> Result<ExtremumResult> {
    check_level(level)?;
    check_len(eps, fit)?;
    let pos = locate_extremum(fit, kind)? - 1;
    let boot = trend_bootstrap(eps, fit, cfg)?;
    let mut fallbacks = 0;
    let mut locations = Vec::with_capacity(boot.replicates());
    for b in 0..boot.replicates() {
        let g = boot.replicate(b);
        let found = nearest_extremum(&g, kind, pos).or_else(|| {
            fallbacks += 1;
            global_extremum(&g, kind)
        });
        locations.push(found.unwrap_or(pos) + 1);
    }
    if fallbacks > 0 {
        warn!("{fallbacks} replicates had no interior extremum; used their global extremum");
    }
    let alpha = 1.0 - level;
    let draws: Vec<f64> = locations.iter().map(|&t| t as f64).collect();
    let sorted = awb::sorted(&draws);
    let lower = awb::quantile_sorted(&sorted, alpha / 2.0) as usize;
    let upper = awb::quantile_sorted(&sorted, 1.0 - alpha / 2.0) as usize;
    let location = pos + 1;
    Ok(ExtremumResult {
        kind,
        location,
        value: fit.g_hat[pos].expect("extremum is defined"),
        level,
        lower,
        upper,
        location_year: time_to_year(eps, location as f64),
        lower_year: time_to_year(eps, lower as f64),
        upper_year: time_to_year(eps, upper as f64),
        location_date: eps.date(pos),
        lower_date: eps.date(lower - 1),
        upper_date: eps.date(upper - 1),
        bootstrap_locations: locations,
        fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTestResult {
    pub q_ave: f64,
    pub q_sup: f64,
    pub cv_ave: f64,
    pub cv_sup: f64,
    pub p_ave: f64,
    pub p_sup: f64,
    pub alpha: f64,
    pub reject_ave: bool,
    pub reject_sup: bool,
    /// One-based model times `[start, end]` of the tested segment.
    pub test_set: (usize, usize),
    /// Slope of the anchored line per grid step.
    pub theta_hat: f64,
    pub slope_per_year: f64,
    pub anchor_time: usize,
    pub anchor_value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_ave: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_sup: Vec<f64>,
}

/// Least-squares slope of the line through `(anchor, value)` fitted to the
/// observed points from `anchor` onward.
fn anchored_slope(y: &[f64], mask: &[bool], anchor: usize, value: f64) -> f64 {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in anchor..y.len() {
        if mask[i] {
            let x = (i - anchor) as f64;
            sxy += x * (y[i] - value);
            sxx += x * x;
        }
    }
    sxy / sxx
}

/// `(mean, max)` of `(ĝ − line)²` over the defined points from `anchor` on.
fn q_stats(g: &[Option<f64>], anchor: usize, value: f64, slope: f64) -> (f64, f64) {
    let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
    for (i, gi) in g.iter().enumerate().skip(anchor) {
        if let Some(gi) = gi {
            let q = (gi - value - slope * (i - anchor) as f64).powi(2);
            sum += q;
            max = max.max(q);
            n += 1;
        }
    }
    (sum / n as f64, max)
}

/// Tests whether the trend is linear from the extremum to the end of the
/// sample, with the line pinned at the extremum.
pub fn linearity_test(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    anchor: &ExtremumResult,
    cfg: &AwbConfig,
    alpha: f64,
) -> Result<ShapeTestResult> {
    linearity_test_at(eps, fit, anchor.location, cfg, alpha)
}

/// [`linearity_test`] anchored at a one-based time, without first
/// bootstrapping the extremum location.
pub fn linearity_test_at(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    anchor_time: usize,
    cfg: &AwbConfig,
    alpha: f64,
) -> Result<ShapeTestResult> {
    check_level(1.0 - alpha)?;
    check_len(eps, fit)?;
    cfg.validate()?;
    let len = eps.len();
    let a = anchor_time
        .checked_sub(1)
        .filter(|&a| a < len)
        .ok_or_else(|| Error::invalid("anchor lies outside the series"))?;
    let mask = eps.mask();
    let observed = mask[a..].iter().filter(|&&m| m).count();
    if observed < 3 || mask[a + 1..].iter().all(|&m| !m) {
        return Err(Error::invalid(format!(
            "the segment after the extremum has {observed} observations; at least 3 are needed"
        )));
    }
    let value = fit.g_hat[a].ok_or_else(|| Error::invalid("trend undefined at the anchor"))?;
    let slope = anchored_slope(eps.values(), mask, a, value);
    let (q_ave, q_sup) = q_stats(&fit.g_hat, a, value, slope);

    // Null trend: the anchored line on the segment, the kernel fit before it.
    let null: Vec<Option<f64>> = (0..len)
        .map(|i| {
            if i >= a {
                Some(value + slope * (i - a) as f64)
            } else {
                fit.g_hat[i]
            }
        })
        .collect();
    let residuals: Vec<f64> = (0..len)
        .map(|i| match (mask[i], null[i]) {
            (true, Some(g)) => eps.values()[i] - g,
            _ => 0.0,
        })
        .collect();
    let sm = Smoother::new(mask, fit.h, fit.kernel)?;
    let stats = awb::run_replicates(cfg.replicates, |b| {
        let xi = awb::draw_multipliers(cfg, len, b);
        let y: Vec<f64> = (0..len)
            .map(|i| match (mask[i], null[i]) {
                (true, Some(g)) => g + xi.0[i] * residuals[i],
                _ => 0.0,
            })
            .collect();
        let g = sm.smooth(&y);
        let v = g[a].ok_or_else(|| Error::Singular("replicate trend undefined at the anchor".into()))?;
        let s = anchored_slope(&y, mask, a, v);
        Ok(q_stats(&g, a, v, s))
    })?;
    let bootstrap_ave: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let bootstrap_sup: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let cv_ave = awb::quantile(&bootstrap_ave, 1.0 - alpha);
    let cv_sup = awb::quantile(&bootstrap_sup, 1.0 - alpha);
    Ok(ShapeTestResult {
        q_ave,
        q_sup,
        cv_ave,
        cv_sup,
        p_ave: awb::upper_p_value(q_ave, &bootstrap_ave),
        p_sup: awb::upper_p_value(q_sup, &bootstrap_sup),
        alpha,
        reject_ave: q_ave > cv_ave,
        reject_sup: q_sup > cv_sup,
        test_set: (a + 1, len),
        theta_hat: slope,
        slope_per_year: slope / eps.grid_step(),
        anchor_time: a + 1,
        anchor_value: value,
        bootstrap_ave,
        bootstrap_sup,
    })
}

/// `0.5 T^{-1/5}`.
pub fn h_u(len: usize) -> f64 {
    0.5 * (len as f64).powf(-0.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityResult {
    pub u1: f64,
    pub u2: f64,
    pub h_u: f64,
    pub cv1: f64,
    pub cv2: f64,
    pub p1: f64,
    pub p2: f64,
    pub alpha: f64,
    pub reject1: bool,
    pub reject2: bool,
    /// One-based model times `[start, end]`.
    pub interval: (usize, usize),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_u1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bootstrap_u2: Vec<f64>,
}

/// Per-point statistics `(U₁,t, U₂,t)` for `t` in `interval` (one-based,
/// inclusive), summing over observed pairs `i < j` only.
///
/// For fixed `t` and `j`, the weight of `i = j + d` is a quadratic in `d`,
/// so the inner sum over `i` reduces to the moments `Σ s_ij dᵏ`, `k ≤ 2`.
/// For fixed `j` the admissible `i` form the range `(t − H, j)`, which only
/// shrinks as `t` grows, so the moments are kept per `j` and trimmed.
pub fn u_statistics(y: &[f64], mask: &[bool], interval: (usize, usize), h_u: f64) -> Vec<(f64, f64)> {
    let len = y.len();
    let big_h = len as f64 * h_u;
    let c = 0.75 / h_u;
    let prefactor = -2.0 / (len as f64 * (len as f64 - 1.0));
    let obs: Vec<usize> = (1..=len).filter(|&t| mask[t - 1]).collect();
    let val: Vec<f64> = obs.iter().map(|&t| y[t - 1]).collect();
    let n = obs.len();
    // Per observed j: first included observed index and the six moments.
    let mut start = vec![usize::MAX; n];
    let mut moments = vec![[0.0f64; 6]; n];
    let mut out = Vec::with_capacity(interval.1 + 1 - interval.0);
    let (mut lo, mut hi) = (0usize, 0usize);
    for t in interval.0..=interval.1 {
        let tf = t as f64;
        // Observed j with |j − t| < H.
        while lo < n && (obs[lo] as f64) <= tf - big_h {
            lo += 1;
        }
        while hi < n && (obs[hi] as f64) < tf + big_h {
            hi += 1;
        }
        let (mut u1, mut u2) = (0.0, 0.0);
        for jj in lo..hi {
            if start[jj] == usize::MAX {
                for ii in (lo..jj).rev() {
                    add_pair(&mut moments[jj], &obs, &val, ii, jj, 1.0);
                }
                start[jj] = lo;
            } else {
                while start[jj] < lo {
                    add_pair(&mut moments[jj], &obs, &val, start[jj], jj, -1.0);
                    start[jj] += 1;
                }
            }
            let e = obs[jj] as f64 - tf;
            let h2 = big_h * big_h;
            let w_j = c * (1.0 - e * e / h2);
            let m = &moments[jj];
            let a0 = 1.0 - e * e / h2;
            let a1 = 2.0 * e / h2;
            let a2 = 1.0 / h2;
            u1 += w_j * c * (a0 * m[0] - a1 * m[1] - a2 * m[2]);
            u2 += w_j * c * (a0 * m[3] - a1 * m[4] - a2 * m[5]);
        }
        out.push((prefactor * u1, prefactor * u2));
    }
    out
}

fn add_pair(m: &mut [f64; 6], obs: &[usize], val: &[f64], ii: usize, jj: usize, sign: f64) {
    let d = obs[ii] as f64 - obs[jj] as f64;
    let diff = val[jj] - val[ii];
    let s = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    m[0] += sign * s;
    m[1] += sign * s * d;
    m[2] += sign * s * d * d;
    m[3] += sign * diff;
    m[4] += sign * diff * d;
    m[5] += sign * diff * d * d;
}

fn sup_pair(stats: &[(f64, f64)]) -> (f64, f64) {
    stats
        .iter()
        .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, s| {
            (acc.0.max(s.0), acc.1.max(s.1))
        })
}

/// Tests the null of an increasing trend on `interval` (one-based times,
/// inclusive). Bootstrap samples carry no trend; their errors come from
/// the residuals around the pilot kernel fit for `fit.h`.
pub fn monotonicity_tests(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    interval: (usize, usize),
    cfg: &AwbConfig,
    h_u_override: Option<f64>,
    alpha: f64,
) -> Result<MonotonicityResult> {
    check_level(1.0 - alpha)?;
    check_len(eps, fit)?;
    cfg.validate()?;
    let len = eps.len();
    if interval.0 == 0 || interval.0 > interval.1 || interval.1 > len {
        return Err(Error::invalid(format!(
            "interval {}..{} is empty or outside 1..{len}",
            interval.0, interval.1
        )));
    }
    let hu = h_u_override.unwrap_or_else(|| h_u(len));
    if !(hu > 0.0) {
        return Err(Error::invalid("monotonicity bandwidth must be positive"));
    }
    let mask = eps.mask();
    let (u1, u2) = sup_pair(&u_statistics(eps.values(), mask, interval, hu));
    let pilot = Smoother::new(mask, pilot_bandwidth(fit.h), fit.kernel)?.smooth(eps.values());
    let residuals: Vec<f64> = (0..len)
        .map(|i| match (mask[i], pilot[i]) {
            (true, Some(p)) => eps.values()[i] - p,
            _ => 0.0,
        })
        .collect();
    let stats = awb::run_replicates(cfg.replicates, |b| {
        let xi = awb::draw_multipliers(cfg, len, b);
        let y = awb::bootstrap_errors(&residuals, mask, &xi)?;
        Ok(sup_pair(&u_statistics(&y, mask, interval, hu)))
    })?;
    let bootstrap_u1: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let bootstrap_u2: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let cv1 = awb::quantile(&bootstrap_u1, 1.0 - alpha);
    let cv2 = awb::quantile(&bootstrap_u2, 1.0 - alpha);
    Ok(MonotonicityResult {
        u1,
        u2,
        h_u: hu,
        cv1,
        cv2,
        p1: awb::upper_p_value(u1, &bootstrap_u1),
        p2: awb::upper_p_value(u2, &bootstrap_u2),
        alpha,
        reject1: u1 > cv1,
        reject2: u2 > cv2,
        interval,
        bootstrap_u1,
        bootstrap_u2,
    })
}

/// Direct double sum over observed pairs; the reference for
/// [`u_statistics`].
pub fn u_statistics_naive(y: &[f64], mask: &[bool], interval: (usize, usize), h_u: f64) -> Vec<(f64, f64)> {
    let len = y.len();
    let n = len as f64;
    let k = |x: f64| if x.abs() < 1.0 { 0.75 * (1.0 - x * x) } else { 0.0 };
    (interval.0..=interval.1)
        .map(|t| {
            let (mut u1, mut u2) = (0.0, 0.0);
            for j in 1..=len {
                for i in 1..j {
                    if !(mask[i - 1] && mask[j - 1]) {
                        continue;
                    }
                    let wi = k((i as f64 - t as f64) / (n * h_u)) / h_u;
                    let wj = k((j as f64 - t as f64) / (n * h_u)) / h_u;
                    let diff = y[j - 1] - y[i - 1];
                    let s = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    u1 += s * wi * wj;
                    u2 += diff * wi * wj;
                }
            }
            let f = -2.0 / (n * (n - 1.0));
            (f * u1, f * u2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kerneltrend::{nw_estimate, Kernel};
    use crate::series::reference_date;

    #[test]
    fn finder_examples() {
        let g: Vec<Option<f64>> = [3.0, 1.0, 2.0, 0.0, 5.0].iter().map(|&v| Some(v)).collect();
        assert_eq!(nearest_extremum(&g, ExtremumKind::Min, 3), Some(3));
        assert_eq!(nearest_extremum(&g, ExtremumKind::Min, 0), Some(1));
        // Equidistant: the earlier one wins.
        assert_eq!(nearest_extremum(&g, ExtremumKind::Min, 2), Some(1));
        assert_eq!(local_extrema(&g, ExtremumKind::Max), vec![2]);
        let monotone: Vec<Option<f64>> = (0..5).map(|v| Some(v as f64)).collect();
        assert_eq!(nearest_extremum(&monotone, ExtremumKind::Min, 2), None);
        // Undefined points are skipped, not treated as breaks.
        let gappy = vec![Some(2.0), None, Some(1.0), None, Some(3.0)];
        assert_eq!(local_extrema(&gappy, ExtremumKind::Min), vec![2]);
    }

    #[test]
    fn h_u_examples() {
        for (t, h) in [
            (2935, 0.101_262_44),
            (814, 0.130_871_51),
            (1399, 0.117_437_41),
            (666, 0.136_230_75),
        ] {
            assert!((h_u(t) - h).abs() < 1e-8, "T={t}");
        }
    }

    #[test]
    fn fast_u_matches_naive() {
        let len = 150;
        let y: Vec<f64> = (0..len)
            .map(|i| (((i * 7919) % 23) as f64 - 11.0) * 0.3)
            .collect();
        let mut mask = vec![true; len];
        for i in (0..len).filter(|i| i % 5 == 2 || (40..55).contains(i)) {
            mask[i] = false;
        }
        for hu in [0.05, 0.11, 0.3] {
            let fast = u_statistics(&y, &mask, (20, 140), hu);
            let slow = u_statistics_naive(&y, &mask, (20, 140), hu);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a.0 - b.0).abs() < 1e-10, "{a:?} {b:?}");
                assert!((a.1 - b.1).abs() < 1e-10, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn increasing_series_has_negative_u1() {
        let len = 100;
        let y: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let stats = u_statistics(&y, &vec![true; len], (2, 99), h_u(len));
        assert!(stats.iter().all(|s| s.0 < 0.0 && s.1 < 0.0));
    }

    fn v_shape(len: usize, bottom: usize) -> ObservedSeries {
        let y = (0..len).map(|i| (i as f64 - bottom as f64).abs() * 0.1).collect();
        ObservedSeries::new(y, vec![true; len], reference_date()).unwrap()
    }

    #[test]
    fn monotone_trend_has_no_extremum() {
        let len = 80;
        let s = ObservedSeries::complete((0..len).map(|i| i as f64).collect()).unwrap();
        let fit = nw_estimate(&s, 0.1, Kernel::Epanechnikov).unwrap();
        let cfg = AwbConfig::new(len, 0.1, 9, 1).unwrap();
        let err = extremum_ci(&s, &fit, &cfg, ExtremumKind::Min, 0.95).unwrap_err();
        assert!(matches!(err, Error::NoInteriorExtremum(_)));
        assert!(err.is_numerical());
    }

    #[test]
    fn symmetric_v_recovers_its_bottom() {
        let s = v_shape(101, 50);
        let fit = nw_estimate(&s, 0.05, Kernel::Epanechnikov).unwrap();
        let cfg = AwbConfig::new(101, 0.1, 19, 4).unwrap();
        let r = extremum_ci(&s, &fit, &cfg, ExtremumKind::Min, 0.9).unwrap();
        assert_eq!(r.location, 51);
        assert!(r.lower <= 51 && 51 <= r.upper);
        let q = linearity_test(&s, &fit, &r, &cfg, 0.05).unwrap();
        assert!(q.q_sup >= q.q_ave && q.q_ave >= 0.0);
        assert_eq!(q.test_set, (51, 101));
    }
}
