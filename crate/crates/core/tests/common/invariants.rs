//! Invariant bodies shared by the proptest suite and the acceptance runner.
//! Each takes the generated inputs and fails with a `TestCaseError`.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trendinfer::awb::{self, AwbConfig};
use trendinfer::breaktrend::{self, BreakScanner, TrimmingSet};
use trendinfer::kerneltrend::{self, BandResult, Kernel};
use trendinfer::mcharness::{self, Panel};
use trendinfer::series::{reference_date, ObservedSeries};
use trendinfer::shapetests::{self, ExtremumKind};

pub type Outcome = Result<(), TestCaseError>;

pub fn cfg(len: usize, replicates: usize, seed: u64) -> AwbConfig {
    AwbConfig::new(len, 0.1, replicates, seed).unwrap()
}

pub fn gappy(len: usize, p: f64, seed: u64, trend: impl Fn(f64) -> f64) -> ObservedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask: Vec<bool> = (0..len).map(|_| rng.gen_bool(p)).collect();
    // Keep both ends observed so trimming and window support are never the
    // reason a case is discarded.
    for i in [0, 1, 2, len - 3, len - 2, len - 1] {
        mask[i] = true;
    }
    let values = (0..len)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            trend((i + 1) as f64 / len as f64) + 0.3 * z
        })
        .collect();
    ObservedSeries::new(values, mask, reference_date()).unwrap()
}

pub fn kinked(len: usize, p: f64, seed: u64) -> ObservedSeries {
    gappy(len, p, seed, |tau| 1.0 + 2.0 * tau + 3.0 * (tau - 0.6).max(0.0))
}

pub fn valley(len: usize, p: f64, seed: u64) -> ObservedSeries {
    gappy(len, p, seed, |tau| 4.0 * (tau - 0.4) * (tau - 0.4))
}

pub fn map_observed(s: &ObservedSeries, f: impl Fn(f64) -> f64) -> ObservedSeries {
    s.with_values(s.values().iter().map(|&v| f(v)).collect()).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

pub fn sample_var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn sample_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Column `t` of `replicates` paths of length `len`.
pub fn columns(gamma: f64, len: usize, replicates: usize, seed: u64) -> Vec<Vec<f64>> {
    let c = cfg(len, 1, seed).with_gamma(gamma).unwrap();
    let mut cols = vec![Vec::with_capacity(replicates); len];
    for b in 0..replicates {
        for (t, x) in awb::draw_multipliers(&c, len, b).0.into_iter().enumerate() {
            cols[t].push(x);
        }
    }
    cols
}

pub fn multiplier_paths_are_stationary(gamma: f64, seed: u64) -> Outcome {
    let n = 20_000;
    let cols = columns(gamma, 8, n, seed);
    // Five standard errors of a variance estimate.
    let tol = 5.0 * (2.0 / n as f64).sqrt();
    for col in [&cols[0], &cols[7]] {
        prop_assert!((sample_var(col) - 1.0).abs() < tol);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        prop_assert!(mean.abs() < 5.0 / (n as f64).sqrt());
    }
    let r = sample_corr(&cols[3], &cols[4]);
    prop_assert!((r - gamma).abs() < 5.0 * (1.0 - gamma * gamma) / (n as f64).sqrt() + 1e-3);
    Ok(())
}

pub fn break_fit_is_shift_equivariant(seed: u64, len: usize, c: f64) -> Outcome {
    let s = kinked(len, 0.8, seed);
    let trim = TrimmingSet::new(0.15, len).unwrap();
    let a = breaktrend::estimate_break(&s, &trim, 1).unwrap();
    let b = breaktrend::estimate_break(&map_observed(&s, |v| v + c), &trim, 1).unwrap();
    prop_assert_eq!(a.break_time, b.break_time);
    prop_assert!(rel_close(a.alpha + c, b.alpha, 1e-8));
    prop_assert!(rel_close(a.beta, b.beta, 1e-8));
    prop_assert!(rel_close(a.delta, b.delta, 1e-8));
    let f = |s: &ObservedSeries| BreakScanner::new(s, trim, 1).unwrap().scan(s.values()).statistic;
    prop_assert!(rel_close(f(&s), f(&map_observed(&s, |v| v + c)), 1e-7));
    Ok(())
}

pub fn break_test_is_scale_equivariant(seed: u64, len: usize, c: f64) -> Outcome {
    let s = kinked(len, 0.8, seed);
    let scaled = map_observed(&s, |v| v * c);
    let trim = TrimmingSet::new(0.15, len).unwrap();
    let boot = cfg(len, 49, seed ^ 7);
    let a = breaktrend::break_test(&s, &trim, &boot, 0, 0.05).unwrap();
    let b = breaktrend::break_test(&scaled, &trim, &boot, 0, 0.05).unwrap();
    prop_assert!(rel_close(a.statistic * c * c, b.statistic, 1e-8));
    prop_assert_eq!(a.p_value, b.p_value);
    let ea = breaktrend::estimate_break(&s, &trim, 0).unwrap();
    let eb = breaktrend::estimate_break(&scaled, &trim, 0).unwrap();
    prop_assert_eq!(ea.break_time, eb.break_time);
    Ok(())
}

pub fn kernel_trend_is_affine_equivariant(seed: u64, len: usize, h: f64, a: f64, c: f64) -> Outcome {
    let s = valley(len, 0.7, seed);
    let base = kerneltrend::nw_estimate(&s, h, Kernel::Epanechnikov)
        .unwrap()
        .g_hat;
    let moved = kerneltrend::nw_estimate(&map_observed(&s, |v| a * v + c), h, Kernel::Epanechnikov)
        .unwrap()
        .g_hat;
    for (x, y) in base.iter().zip(&moved) {
        prop_assert_eq!(x.is_some(), y.is_some());
        if let (Some(x), Some(y)) = (x, y) {
            prop_assert!(rel_close(a * x + c, *y, 1e-10));
        }
    }
    Ok(())
}

fn contains(outer: &BandResult, inner: &BandResult) -> bool {
    let le = |a: &Option<f64>, b: &Option<f64>| match (a, b) {
        (Some(a), Some(b)) => a <= b,
        _ => true,
    };
    outer.lower.iter().zip(&inner.lower).all(|(a, b)| le(a, b))
        && outer.upper.iter().zip(&inner.upper).all(|(a, b)| le(b, a))
}

pub fn bands_are_nested(seed: u64, len: usize, h: f64) -> Outcome {
    let s = valley(len, 0.7, seed);
    let fit = kerneltrend::nw_estimate(&s, h, Kernel::Epanechnikov).unwrap();
    let boot = kerneltrend::trend_bootstrap(&s, &fit, &cfg(len, 99, seed)).unwrap();
    let sim95 = boot.simultaneous(0.95).unwrap();
    let sim99 = boot.simultaneous(0.99).unwrap();
    let pw95 = boot.pointwise(0.95).unwrap();
    let pw99 = boot.pointwise(0.99).unwrap();
    prop_assert!(contains(&sim99, &sim95));
    prop_assert!(contains(&pw99, &pw95));
    prop_assert!(contains(&sim95, &pw95));
    Ok(())
}

pub fn u1_sees_only_pairwise_order(seed: u64, len: usize, h_u: f64) -> Outcome {
    let s = valley(len, 0.7, seed);
    let bent = map_observed(&s, |v| (v / 3.0).exp() + v * v * v);
    let a = shapetests::u_statistics(s.values(), s.mask(), (1, len), h_u);
    let b = shapetests::u_statistics(bent.values(), bent.mask(), (1, len), h_u);
    for (x, y) in a.iter().zip(&b) {
        prop_assert!(rel_close(x.0, y.0, 1e-12));
    }
    Ok(())
}

/// Every bootstrap path, including the Monte Carlo cells, in pools of one
/// and four workers.
pub fn bootstrap_paths_ignore_the_pool(seed: u64) -> Outcome {
    let len = 240;
    let boot = cfg(len, 29, seed);
    let kink = kinked(len, 0.7, seed);
    let trim = TrimmingSet::new(0.1, len).unwrap();
    let v = valley(len, 0.7, seed);
    let fit = kerneltrend::nw_estimate(&v, 0.12, Kernel::Epanechnikov).unwrap();
    let cells = [
        mcharness::panel_cells(Panel::A, Panel::A.default_sigma_eta(), 0)[1],
        mcharness::panel_cells(Panel::B, Panel::B.default_sigma_eta(), 0)[0],
        mcharness::panel_cells(Panel::C, Panel::C.default_sigma_eta(), 0)[0],
        mcharness::panel_cells(Panel::D, Panel::D.default_sigma_eta(), 0)[0],
    ];
    let everything = || {
        let test = breaktrend::break_test(&kink, &trim, &boot, 1, 0.05).unwrap();
        let est = breaktrend::estimate_break(&kink, &trim, 1).unwrap();
        let ci = breaktrend::break_ci(&kink, &est, &trim, &boot, 0.95).unwrap();
        let slopes = breaktrend::slope_cis(&kink, &est, &boot, 0.95).unwrap();
        let tb = kerneltrend::trend_bootstrap(&v, &fit, &boot).unwrap();
        let bands = (tb.pointwise(0.95).unwrap(), tb.simultaneous(0.95).unwrap());
        let ext = shapetests::extremum_ci(&v, &fit, &boot, ExtremumKind::Min, 0.95).unwrap();
        let lin = shapetests::linearity_test(&v, &fit, &ext, &boot, 0.05).unwrap();
        let mono = shapetests::monotonicity_tests(&v, &fit, (ext.location, len), &boot, None, 0.05).unwrap();
        let mc: Vec<_> = cells
            .iter()
            .map(|c| mcharness::run_cell(c, 2, 19, seed))
            .collect();
        (test, ci, slopes, tb.deviations, bands, ext, lin, mono, mc)
    };
    let serial = in_pool(1, everything);
    let parallel = in_pool(4, everything);
    prop_assert!(serial == parallel);
    Ok(())
}
