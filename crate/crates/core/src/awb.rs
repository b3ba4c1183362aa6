//! Autoregressive wild bootstrap.
//!
//! Multipliers follow a stationary Gaussian AR(1) process with unit
//! marginal variance. Every replicate draws from its own ChaCha stream keyed
//! by `(seed, domain, replicate_id)`, so a replicate's multipliers do not
//! depend on which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THETA: f64 = 0.1;
pub const DEFAULT_REPLICATES: usize = 999;

/// Stream domain for bootstrap multipliers.
const MULTIPLIER_DOMAIN: u64 = 0x6177_625f_6d75_6c74;

/// Dependence length `1.75 T^{1/3}`.
pub fn dependence_length(len: usize) -> f64 {
    1.75 * (len as f64).cbrt()
}

/// `theta^(1/l)` with `l = 1.75 T^{1/3}`.
pub fn default_gamma(len: usize, theta: f64) -> f64 {
    (theta.ln() / dependence_length(len)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwbConfig {
    pub gamma: f64,
    pub theta: f64,
    pub l: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl AwbConfig {
    /// Tuning `gamma = theta^(1/l)` for a grid of `len` points.
    pub fn new(len: usize, theta: f64, replicates: usize, seed: u64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid(format!("theta must lie in (0,1), got {theta}")));
        }
        if len < 2 {
            return Err(Error::invalid("series length must be at least 2"));
        }
        let cfg = Self {
            gamma: default_gamma(len, theta),
            theta,
            l: dependence_length(len),
            replicates,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        // gamma = 0 is the i.i.d. wild bootstrap and is admitted.
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must lie in [0,1), got {}",
                self.gamma
            )));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("at least one bootstrap replicate is required"));
        }
        Ok(())
    }
}

/// A deterministic random stream for `(seed, domain, id)`.
pub fn stream(seed: u64, domain: u64, id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ domain.rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes several identifiers into one seed, e.g. (base seed, cell, replicate).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        state ^= p;
        state = splitmix64(&mut state);
    }
    state
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierPath(pub Vec<f64>);

impl MultiplierPath {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn draw_multipliers(cfg: &AwbConfig, len: usize, replicate_id: usize) -> MultiplierPath {
    let mut rng = stream(cfg.seed, MULTIPLIER_DOMAIN, replicate_id as u64);
    let innovation_sd = (1.0 - cfg.gamma * cfg.gamma).sqrt();
    let mut xi = Vec::with_capacity(len);
    let mut prev: f64 = StandardNormal.sample(&mut rng);
    if len > 0 {
        xi.push(prev);
    }
    for _ in 1..len {
        let z: f64 = StandardNormal.sample(&mut rng);
        prev = cfg.gamma * prev + innovation_sd * z;
        xi.push(prev);
    }
    MultiplierPath(xi)
}

/// `u*_t = M_t ξ*_t û_t`.
pub fn bootstrap_errors(residuals: &[f64], mask: &[bool], path: &MultiplierPath) -> Result<Vec<f64>> {
    let n = residuals.len();
    for len in [mask.len(), path.0.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    Ok(residuals
        .iter()
        .zip(mask)
        .zip(&path.0)
        .map(|((u, &m), xi)| if m { xi * u } else { 0.0 })
        .collect())
}

/// Runs `kernel(replicate_id)` for every id in `0..replicates` on the current
/// rayon pool and returns the results in id order. The first failing id (in
/// id order) is reported.
pub fn run_replicates<T, F>(replicates: usize, kernel: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..replicates).into_par_iter().map(&kernel).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(b, r)| {
            r.map_err(|e| Error::Replicate {
                replicate: b,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Left-continuous empirical quantile `inf{u : F_B(u) >= p}` of sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    assert!(b > 0, "quantile of an empty sample");
    sorted[quantile_rank(b, p) - 1]
}

/// One-based order-statistic index used by [`quantile_sorted`].
pub fn quantile_rank(b: usize, p: f64) -> usize {
    let x = p * b as f64;
    // Absorb representation error such as 0.975 * 1000 = 975.0000000000001.
    let k = (x - 1e-9 * x.abs().max(1.0)).ceil();
    (k.max(1.0) as usize).min(b)
}

/// Sorts a bootstrap sample ascending, NaN-free by contract.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted(values), p)
}

/// `(1 + #{stat* >= stat}) / (B + 1)`.
pub fn upper_p_value(statistic: f64, bootstrap: &[f64]) -> f64 {
    let exceed = bootstrap.iter().filter(|&&s| s >= statistic).count();
    (1 + exceed) as f64 / (bootstrap.len() + 1) as f64
}
