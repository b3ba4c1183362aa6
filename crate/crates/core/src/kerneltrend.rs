//! Local-constant kernel trend on the deseasonalized series.
//!
//! The estimate at `τ = t/T` is the Nadaraya–Watson average of the observed
//! values with weights `K((s − t)/(T h))`. Every estimate is evaluated on the
//! full grid; a point whose window holds no observation is left undefined.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::awb::{self, AwbConfig};
use crate::error::{Error, Result};
use crate::series::ObservedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
}

impl Kernel {
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if x.abs() <= 1.0 {
                    0.75 * (1.0 - x * x)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Oversmoothed pilot bandwidth `0.5 h^{5/9}`.
pub fn pilot_bandwidth(h: f64) -> f64 {
    0.5 * h.powf(5.0 / 9.0)
}

/// Default MCV leave-out half-width `⌈1.75 T^{1/3}⌉`.
pub fn default_leave_out(len: usize) -> usize {
    awb::dependence_length(len).ceil() as usize
}

/// Inclusive grid `lo, lo + step, …, hi`.
pub fn bandwidth_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && step > 0.0) {
        return Err(Error::invalid(format!(
            "bandwidth grid needs 0 < lo <= hi and step > 0, got {lo}:{hi}:{step}"
        )));
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

/// Kernel weights and mask-only denominators for one bandwidth and grid.
#[derive(Debug, Clone)]
pub struct Smoother {
    kernel: Kernel,
    h: f64,
    mask: Vec<bool>,
    /// `K(d/(T h))` for `d = 0..=W`.
    weights: Vec<f64>,
    /// Local weight sums; zero where the estimate is undefined.
    sums: Vec<f64>,
}

impl Smoother {
    pub fn new(mask: &[bool], h: f64, kernel: Kernel) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
        }
        let len = mask.len();
        let scale = len as f64 * h;
        let half = (scale.floor() as usize).min(len);
        let weights: Vec<f64> = (0..=half).map(|d| kernel.weight(d as f64 / scale)).collect();
        let sums = window_sums(mask, &weights, |_| 1.0);
        Ok(Self {
            kernel,
            h,
            mask: mask.to_vec(),
            weights,
            sums,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn weight_sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.sums[i] > 0.0
    }

    pub fn smooth(&self, y: &[f64]) -> Vec<Option<f64>> {
        let num = window_sums(&self.mask, &self.weights, |s| y[s]);
        num.iter()
            .zip(&self.sums)
            .map(|(n, d)| (*d > 0.0).then(|| n / d))
            .collect()
    }

    /// Estimates that omit every observation within `k` steps of the target.
    pub fn smooth_leave_out(&self, y: &[f64], k: usize) -> Vec<Option<f64>> {
        let len = self.mask.len();
        let mut out = Vec::with_capacity(len);
        for t in 0..len {
            let (mut num, mut den) = (0.0, 0.0);
            for d in (k + 1)..self.weights.len() {
                let w = self.weights[d];
                if t >= d && self.mask[t - d] {
                    num += w * y[t - d];
                    den += w;
                }
                if t + d < len && self.mask[t + d] {
                    num += w * y[t + d];
                    den += w;
                }
            }
            out.push((den > 0.0).then(|| num / den));
        }
        out
    }
}

/// `Σ_{|s−t| ≤ W} K_{|s−t|} M_s f(s)` for every `t`.
fn window_sums(mask: &[bool], weights: &[f64], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let len = mask.len();
    let mut out = vec![0.0; len];
    for s in (0..len).filter(|&s| mask[s]) {
        let v = f(s);
        let lo = s.saturating_sub(weights.len() - 1);
        let hi = (s + weights.len()).min(len);
        for (t, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
            *o += weights[s.abs_diff(t)] * v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrendFit {
    /// `None` where the kernel window contains no observation.
    pub g_hat: Vec<Option<f64>>,
    pub h: f64,
    pub kernel: Kernel,
    pub weight_sums: Vec<f64>,
}

impl KernelTrendFit {
    pub fn len(&self) -> usize {
        self.g_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_hat.is_empty()
    }

    pub fn undefined_count(&self) -> usize {
        self.g_hat.iter().filter(|g| g.is_none()).count()
    }
}

pub fn nw_estimate(eps: &ObservedSeries, h: f64, kernel: Kernel) -> Result<KernelTrendFit> {
    let sm = Smoother::new(eps.mask(), h, kernel)?;
    let g_hat = sm.smooth(eps.values());
    let undefined = g_hat.iter().filter(|g| g.is_none()).count();
    if undefined > 0 {
        warn!("{undefined} grid points have an empty kernel window at h = {h}");
    }
    Ok(KernelTrendFit {
        g_hat,
        h,
        kernel,
        weight_sums: sm.sums,
    })
}

/// Indices of interior local minima, treating runs of equal values as one
/// point located at the first index of the run.
pub fn interior_local_minima(values: &[f64]) -> Vec<usize> {
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if runs.last().is_none_or(|r| r.1 != v) {
            runs.push((i, v));
        }
    }
    runs.windows(3)
        .filter(|w| w[0].1 > w[1].1 && w[2].1 > w[1].1)
        .map(|w| w[1].0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McvResult {
    pub grid: Vec<f64>,
    /// `+∞` where no leave-out estimate is defined.
    pub scores: Vec<f64>,
    pub k: usize,
    /// Grid indices of the interior local minima of the score curve.
    pub local_minima: Vec<usize>,
    /// Grid index of the smallest score.
    pub global_minimum: usize,
    pub no_interior_minimum: bool,
    /// Set only once the user picks a bandwidth.
    pub chosen: Option<f64>,
}

impl McvResult {
    /// The `n`-th interior local minimum (one-based), ordered by bandwidth.
    pub fn pick_minimum(&mut self, n: usize) -> Result<f64> {
        let idx = *n
            .checked_sub(1)
            .and_then(|i| self.local_minima.get(i))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "minimum {n} requested but the score curve has {} interior local minima",
                    self.local_minima.len()
                ))
            })?;
        self.chosen = Some(self.grid[idx]);
        Ok(self.grid[idx])
    }
}

/// Leave-`(2k+1)`-out cross-validation over a bandwidth grid.
pub fn mcv_scan(eps: &ObservedSeries, grid: &[f64], k: usize) -> Result<McvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("bandwidth grid is empty"));
    }
    let len = eps.len() as f64;
    let n_obs = eps.observed_count() as f64;
    let scores: Vec<f64> = grid
        .iter()
        .map(|&h| {
            let sm = Smoother::new(eps.mask(), h, Kernel::Epanechnikov)?;
            let g = sm.smooth_leave_out(eps.values(), k);
            let (mut sum, mut defined) = (0.0, 0usize);
            for (i, gi) in g.iter().enumerate() {
                if let (true, Some(gi)) = (eps.mask()[i], gi) {
                    sum += (gi - eps.values()[i]).powi(2);
                    defined += 1;
                }
            }
            Ok(if defined == 0 {
                warn!("bandwidth {h}: every leave-out window is empty; score set to infinity");
                f64::INFINITY
            } else {
                // Average over the points that could be scored.
                sum / len * n_obs / defined as f64
            })
        })
        .collect::<Result<_>>()?;
    let local_minima = interior_local_minima(&scores);
    let global_minimum = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if *s < scores[best] { i } else { best });
    Ok(McvResult {
        grid: grid.to_vec(),
        no_interior_minimum: local_minima.is_empty(),
        local_minima,
        global_minimum,
        scores,
        k,
        chosen: None,
    })
}

/// Stored bootstrap draws of the kernel trend around the pilot estimate.
#[derive(Debug, Clone)]
pub struct TrendBootstrap {
    pub g_hat: Vec<Option<f64>>,
    pub pilot: Vec<Option<f64>>,
    pub pilot_h: f64,
    /// Points where both `g_hat` and the pilot are defined.
    pub defined: Vec<bool>,
    /// `ĝ*_b − g̃` per replicate, zero at undefined points.
    pub deviations: Vec<Vec<f64>>,
    /// Per grid point, the replicate deviations sorted ascending.
    sorted: Vec<Vec<f64>>,
}

/// Resamples `ε̂* = M(g̃ + ξ* û)` with `û = M(ε̂ − g̃)` from the pilot fit and
/// re-smooths each replicate with the original bandwidth.
pub fn trend_bootstrap(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    cfg: &AwbConfig,
) -> Result<TrendBootstrap> {
    bootstrap_around(eps, fit, cfg, None)
}

/// As [`trend_bootstrap`], but regenerates around `centre` instead of the
/// pilot estimate.
pub(crate) fn bootstrap_around(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    cfg: &AwbConfig,
    centre: Option<Vec<Option<f64>>>,
) -> Result<TrendBootstrap> {
    cfg.validate()?;
    check_len(eps, fit)?;
    let pilot_h = pilot_bandwidth(fit.h);
    let pilot = match centre {
        Some(c) => c,
        None => Smoother::new(eps.mask(), pilot_h, fit.kernel)?.smooth(eps.values()),
    };
    let mask = eps.mask();
    let residuals: Vec<f64> = (0..eps.len())
        .map(|i| match (mask[i], pilot[i]) {
            (true, Some(p)) => eps.values()[i] - p,
            _ => 0.0,
        })
        .collect();
    let sm = Smoother::new(mask, fit.h, fit.kernel)?;
    let defined: Vec<bool> = (0..eps.len())
        .map(|i| fit.g_hat[i].is_some() && pilot[i].is_some())
        .collect();
    let deviations = awb::run_replicates(cfg.replicates, |b| {
        let xi = awb::draw_multipliers(cfg, eps.len(), b);
        let y: Vec<f64> = (0..eps.len())
            .map(|i| match (mask[i], pilot[i]) {
                (true, Some(p)) => p + xi.0[i] * residuals[i],
                _ => 0.0,
            })
            .collect();
        let g = sm.smooth(&y);
        Ok((0..eps.len())
            .map(|i| match (defined[i], g[i], pilot[i]) {
                (true, Some(g), Some(p)) => g - p,
                _ => 0.0,
            })
            .collect::<Vec<f64>>())
    })?;
    let sorted = (0..eps.len())
        .map(|i| awb::sorted(&deviations.iter().map(|d| d[i]).collect::<Vec<_>>()))
        .collect();
    Ok(TrendBootstrap {
        g_hat: fit.g_hat.clone(),
        pilot,
        pilot_h,
        defined,
        deviations,
        sorted,
    })
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

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    Ok(())
}

impl TrendBootstrap {
    pub fn replicates(&self) -> usize {
        self.deviations.len()
    }

    /// Replicate estimate `ĝ*_b = g̃ + deviation`.
    pub fn replicate(&self, b: usize) -> Vec<Option<f64>> {
        self.pilot
            .iter()
            .zip(&self.deviations[b])
            .zip(&self.defined)
            .map(|((p, d), &ok)| if ok { p.map(|p| p + d) } else { None })
            .collect()
    }

    /// Order-statistic ranks (one-based) of the pointwise band at level
    /// `1 − a`.
    fn ranks(&self, a: f64) -> (usize, usize) {
        let b = self.replicates();
        (
            awb::quantile_rank(b, a / 2.0),
            awb::quantile_rank(b, 1.0 - a / 2.0),
        )
    }

    fn band(&self, a: f64) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let (lo, hi) = self.ranks(a);
        let mut lower = vec![None; self.g_hat.len()];
        let mut upper = vec![None; self.g_hat.len()];
        for i in 0..self.g_hat.len() {
            if let (true, Some(g)) = (self.defined[i], self.g_hat[i]) {
                lower[i] = Some(g - self.sorted[i][hi - 1]);
                upper[i] = Some(g - self.sorted[i][lo - 1]);
            }
        }
        (lower, upper)
    }

    pub fn pointwise(&self, level: f64) -> Result<BandResult> {
        check_level(level)?;
        let (lower, upper) = self.band(1.0 - level);
        Ok(BandResult {
            level,
            alpha_s: 1.0 - level,
            pointwise_lower: lower.clone(),
            pointwise_upper: upper.clone(),
            lower,
            upper,
            g_hat: self.g_hat.clone(),
            coverage: None,
            under_covered: false,
        })
    }

    /// Largest `k` for which replicate `b` stays inside the pointwise band at
    /// `α_p = k/B` everywhere, given per-rank lookup tables.
    fn kmax(&self, b: usize, by_le: &[usize], by_lt: &[usize]) -> usize {
        let mut k = usize::MAX;
        for i in (0..self.g_hat.len()).filter(|&i| self.defined[i]) {
            let col = &self.sorted[i];
            let v = self.deviations[b][i];
            let le = col.partition_point(|x| *x <= v);
            let lt = col.partition_point(|x| *x < v);
            k = k.min(by_le[le]).min(by_lt[lt]);
            if k == 0 {
                break;
            }
        }
        k
    }

    /// Fraction of replicates inside the pointwise `k/B` band everywhere,
    /// for `k = 1..=k_max`.
    pub fn coverage_curve(&self, k_max: usize) -> Vec<f64> {
        let b = self.replicates();
        let ranks: Vec<(usize, usize)> = (1..=k_max).map(|k| self.ranks(k as f64 / b as f64)).collect();
        // A path is inside for k iff lo_k <= #{≤ v} and hi_k >= #{< v} + 1;
        // lo_k grows and hi_k shrinks with k, so both tables are thresholds.
        let by_le: Vec<usize> = (0..=b)
            .map(|c| ranks.iter().take_while(|r| r.0 <= c).count())
            .collect();
        let by_lt: Vec<usize> = (0..=b)
            .map(|c| ranks.iter().take_while(|r| r.1 > c).count())
            .collect();
        let kmax: Vec<usize> = (0..b).map(|j| self.kmax(j, &by_le, &by_lt)).collect();
        (1..=k_max)
            .map(|k| kmax.iter().filter(|&&m| m >= k).count() as f64 / b as f64)
            .collect()
    }

    /// Calibrates the pointwise level so that the share of replicates lying
    /// entirely inside the band is as close to `level` as possible.
    pub fn simultaneous(&self, level: f64) -> Result<BandResult> {
        check_level(level)?;
        let b = self.replicates();
        let alpha = 1.0 - level;
        let k_max = ((alpha * b as f64) + 1e-9).floor() as usize;
        let (k, coverage) = if k_max == 0 {
            (1, 1.0)
        } else {
            let curve = self.coverage_curve(k_max);
            let mut best = 0;
            for (j, c) in curve.iter().enumerate() {
                if (c - level).abs() < (curve[best] - level).abs() {
                    best = j;
                }
            }
            (best + 1, curve[best])
        };
        let under_covered = k == 1 && coverage < level;
        if under_covered {
            warn!("simultaneous band under-covers even at the widest pointwise level");
        }
        let alpha_s = k as f64 / b as f64;
        let (lower, upper) = self.band(alpha_s);
        let (pointwise_lower, pointwise_upper) = self.band(alpha);
        Ok(BandResult {
            level,
            alpha_s,
            lower,
            upper,
            pointwise_lower,
            pointwise_upper,
            g_hat: self.g_hat.clone(),
            coverage: Some(coverage),
            under_covered,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub level: f64,
    pub alpha_s: f64,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub pointwise_lower: Vec<Option<f64>>,
    pub pointwise_upper: Vec<Option<f64>>,
    pub g_hat: Vec<Option<f64>>,
    /// Share of replicates inside the simultaneous band; absent for a
    /// pointwise band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub under_covered: bool,
}

pub fn pointwise_bands(
    eps: &ObservedSeries,
    fit: &KernelTrendFit,
    cfg: &AwbConfig,
    level: f64,
) -> Result<BandResult> {
    trend_bootstrap(eps, fit, cfg)?.pointwise(level)
}

pub fn simultaneous_bands(boot: &TrendBootstrap, level: f64) -> Result<BandResult> {
    boot.simultaneous(level)
}
