//! Randomised instances and brute-force oracles shared by the integration
//! suites. Everything here is written from the defining formulas and does
//! not call the routines it checks.

#![allow(dead_code)]

pub mod cli;
pub mod invariants;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendinfer::breaktrend::{BreakScanner, TrimmingSet};
use trendinfer::kerneltrend::{self, Kernel};
use trendinfer::series::{reference_date, ObservedSeries};
use trendinfer::shapetests;

pub const ORACLE_TOL: f64 = 1e-10;
pub const INSTANCES: u64 = 25;

pub fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= ORACLE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// A random gappy series with `len ≤ 200` and at least `min_obs` points.
pub fn random_series(rng: &mut ChaCha8Rng, min_len: usize, step: f64) -> ObservedSeries {
    loop {
        let len = rng.gen_range(min_len..=200);
        let p = rng.gen_range(0.3..0.95);
        let mask: Vec<bool> = (0..len).map(|_| rng.gen_bool(p)).collect();
        if mask.iter().filter(|&&m| m).count() < 8 {
            continue;
        }
        let phase = rng.gen_range(0.0..6.0);
        let values: Vec<f64> = (0..len)
            .map(|i| (i as f64 * 0.07 + phase).sin() * 2.0 + rng.gen_range(-1.0..1.0))
            .collect();
        return ObservedSeries::with_step(values, mask, reference_date(), step).unwrap();
    }
}

pub fn instance_rng(suite: u64, n: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(suite * 1_000 + n)
}

fn epanechnikov(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.75 * (1.0 - x * x)
    } else {
        0.0
    }
}

/// Direct kernel-weighted average; `exclude` drops `|s − t| ≤ exclude`.
pub fn naive_nw(s: &ObservedSeries, h: f64, exclude: Option<usize>) -> Vec<Option<f64>> {
    let len = s.len();
    (0..len)
        .map(|t| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..len {
                if !s.mask()[j] || exclude.is_some_and(|k| j.abs_diff(t) <= k) {
                    continue;
                }
                let w = epanechnikov((j as f64 - t as f64) / (len as f64 * h));
                num += w * s.values()[j];
                den += w;
            }
            (den > 0.0).then(|| num / den)
        })
        .collect()
}

pub fn naive_mcv(s: &ObservedSeries, h: f64, k: usize) -> f64 {
    let g = naive_nw(s, h, Some(k));
    let (mut sum, mut defined) = (0.0, 0usize);
    for t in 0..s.len() {
        if let (true, Some(g)) = (s.mask()[t], g[t]) {
            sum += (g - s.values()[t]).powi(2);
            defined += 1;
        }
    }
    if defined == 0 {
        return f64::INFINITY;
    }
    sum / s.len() as f64 * s.observed_count() as f64 / defined as f64
}

fn design_row(s: &ObservedSeries, i: usize, harmonics: usize, brk: Option<usize>) -> Vec<f64> {
    let t = (i + 1) as f64;
    let mut row = vec![1.0, t];
    if let Some(c) = brk {
        row.push((t - c as f64).max(0.0));
    }
    let year = s.calendar(i);
    for j in 1..=harmonics {
        let a = 2.0 * std::f64::consts::PI * j as f64 * year;
        row.push(a.cos());
        row.push(a.sin());
    }
    row
}

/// Residual sum of squares of the observed rows, from the normal equations
/// with one step of iterative refinement.
pub fn naive_ssr(s: &ObservedSeries, harmonics: usize, brk: Option<usize>) -> f64 {
    let rows: Vec<usize> = (0..s.len()).filter(|&i| s.mask()[i]).collect();
    let p = design_row(s, 0, harmonics, brk).len();
    let x = DMatrix::from_fn(rows.len(), p, |r, c| design_row(s, rows[r], harmonics, brk)[c]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| s.values()[i]));
    let lu = (x.transpose() * &x).lu();
    let mut beta = lu.solve(&(x.transpose() * &y)).unwrap();
    let r = &y - &x * &beta;
    beta += lu.solve(&(x.transpose() * r)).unwrap();
    (y - x * beta).norm_squared()
}

/// `(ssr_null, [(candidate, ssr)])` over the scanner's candidates.
pub fn naive_break_profile(s: &ObservedSeries, scanner: &BreakScanner) -> (f64, Vec<(usize, f64)>) {
    let skipped = scanner.skipped();
    let null = naive_ssr(s, scanner.harmonics(), None);
    let profile = scanner
        .trimming()
        .candidates()
        .filter(|c| !skipped.contains(c))
        .map(|c| (c, naive_ssr(s, scanner.harmonics(), Some(c))))
        .collect();
    (null, profile)
}

/// Double sum over observed pairs.
pub fn naive_u(y: &[f64], mask: &[bool], interval: (usize, usize), h_u: f64) -> Vec<(f64, f64)> {
    let len = y.len() as f64;
    let k = |x: f64| if x.abs() < 1.0 { 0.75 * (1.0 - x * x) } else { 0.0 };
    let obs: Vec<usize> = (1..=y.len()).filter(|&t| mask[t - 1]).collect();
    (interval.0..=interval.1)
        .map(|t| {
            let (mut u1, mut u2) = (0.0, 0.0);
            for (a, &i) in obs.iter().enumerate() {
                for &j in &obs[a + 1..] {
                    let wi = k((i as f64 - t as f64) / (len * h_u)) / h_u;
                    let wj = k((j as f64 - t as f64) / (len * h_u)) / h_u;
                    let d = y[j - 1] - y[i - 1];
                    u1 += d.signum() * f64::from(u8::from(d != 0.0)) * wi * wj;
                    u2 += d * wi * wj;
                }
            }
            let f = -2.0 / (len * (len - 1.0));
            (f * u1, f * u2)
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub instances: usize,
    pub max_error: f64,
    pub failures: Vec<String>,
}

impl OracleReport {
    fn check(&mut self, what: &str, n: u64, a: f64, b: f64) {
        if a.is_finite() && b.is_finite() {
            self.max_error = self.max_error.max((a - b).abs());
        }
        if !close(a, b) {
            self.failures.push(format!("{what} instance {n}: {a} vs {b}"));
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn check_nw() -> OracleReport {
    let mut rep = OracleReport::default();
    for n in 0..INSTANCES {
        let mut rng = instance_rng(1, n);
        let s = random_series(&mut rng, 10, 1.0 / 365.25);
        let h = rng.gen_range(0.02..0.5);
        let fast = kerneltrend::nw_estimate(&s, h, Kernel::Epanechnikov)
            .unwrap()
            .g_hat;
        let slow = naive_nw(&s, h, None);
        for (a, b) in fast.iter().zip(&slow) {
            match (a, b) {
                (Some(a), Some(b)) => rep.check("NW", n, *a, *b),
                (None, None) => {}
                _ => rep.failures.push(format!("NW instance {n}: definedness differs")),
            }
        }
        rep.instances += 1;
    }
    rep
}

pub fn check_mcv() -> OracleReport {
    let mut rep = OracleReport::default();
    for n in 0..INSTANCES {
        let mut rng = instance_rng(2, n);
        let s = random_series(&mut rng, 10, 1.0 / 365.25);
        let k = rng.gen_range(0..=5);
        let grid = [
            rng.gen_range(0.02..0.1),
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.3..0.6),
        ];
        let m = kerneltrend::mcv_scan(&s, &grid, k).unwrap();
        for (h, score) in grid.iter().zip(&m.scores) {
            rep.check("MCV", n, *score, naive_mcv(&s, *h, k));
        }
        rep.instances += 1;
    }
    rep
}

pub fn check_scan() -> OracleReport {
    let mut rep = OracleReport::default();
    let mut n = 0;
    let mut attempt = 0;
    while n < INSTANCES {
        attempt += 1;
        let mut rng = instance_rng(3, attempt);
        // A coarse step keeps the Fourier columns well conditioned.
        let s = random_series(&mut rng, 40, 0.05);
        let harmonics = rng.gen_range(0..=2);
        let lambda = rng.gen_range(0.1..0.3);
        let Ok(trim) = TrimmingSet::new(lambda, s.len()) else {
            continue;
        };
        let Ok(scanner) = BreakScanner::new(&s, trim, harmonics) else {
            continue;
        };
        let (null, profile) = naive_break_profile(&s, &scanner);
        let fast = scanner.profile(s.values());
        if fast.len() != profile.len() {
            rep.failures
                .push(format!("F_T instance {n}: candidate sets differ"));
        }
        for ((c1, a), (c2, b)) in fast.iter().zip(&profile) {
            if c1 != c2 {
                rep.failures
                    .push(format!("F_T instance {n}: candidate {c1} vs {c2}"));
            }
            rep.check("SSR", n, *a, *b);
        }
        let best = profile.iter().fold(
            (0, f64::INFINITY),
            |acc, &(c, v)| if v < acc.1 { (c, v) } else { acc },
        );
        let out = scanner.scan(s.values());
        rep.check("F_T", n, out.statistic, null - best.1);
        rep.check("SSR null", n, out.ssr_null, null);
        if out.break_time != best.0 {
            rep.failures.push(format!(
                "F_T instance {n}: break {} vs {}",
                out.break_time, best.0
            ));
        }
        rep.instances += 1;
        n += 1;
    }
    rep
}

pub fn check_u() -> OracleReport {
    let mut rep = OracleReport::default();
    for n in 0..INSTANCES {
        let mut rng = instance_rng(4, n);
        let s = random_series(&mut rng, 10, 1.0 / 365.25);
        let len = s.len();
        let h_u = rng.gen_range(0.05..0.5);
        let a = rng.gen_range(1..=len);
        let b = rng.gen_range(a..=len);
        let fast = shapetests::u_statistics(s.values(), s.mask(), (a, b), h_u);
        let slow = naive_u(s.values(), s.mask(), (a, b), h_u);
        for (x, y) in fast.iter().zip(&slow) {
            rep.check("U1", n, x.0, y.0);
            rep.check("U2", n, x.1, y.1);
        }
        rep.instances += 1;
    }
    rep
}
