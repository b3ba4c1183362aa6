//! Monte Carlo designs for the break, linearity and monotonicity procedures.
//!
//! Errors are ARMA(1,1) with optional deterministic heteroskedasticity, the
//! observation mask is a two-state Markov chain started from its stationary
//! law, and every replicate draws from streams keyed by
//! `(seed, cell, replicate)` so cells can be re-run on their own.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::awb::{self, AwbConfig};
use crate::breaktrend::{self, BreakScanner, TrimmingSet, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::kerneltrend::{nw_estimate, Kernel};
use crate::series::{reference_date, ObservedSeries};
use crate::shapetests::{self, ExtremumKind};

const BURN_IN: usize = 200;
const ERROR_DOMAIN: u64 = 0x6d63_5f65_7272;
const MASK_DOMAIN: u64 = 0x6d63_5f6d_6173;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingMode {
    /// About 30% of days missing.
    #[serde(rename = "30%")]
    Low,
    /// About 70% of days missing.
    #[serde(rename = "70%")]
    High,
}

impl MissingMode {
    /// Rows: previous state (missing, observed); columns: next state.
    pub fn transition(self) -> [[f64; 2]; 2] {
        match self {
            MissingMode::Low => [[0.55, 0.45], [0.2, 0.8]],
            MissingMode::High => [[0.8, 0.2], [0.45, 0.55]],
        }
    }

    /// Stationary probability of the observed state.
    pub fn observed_fraction(self) -> f64 {
        let p = self.transition();
        p[0][1] / (p[0][1] + p[1][0])
    }

    pub fn label(self) -> &'static str {
        match self {
            MissingMode::Low => "30%",
            MissingMode::High => "70%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hetero {
    pub sigma0: f64,
    pub sigma_star: f64,
    pub a: f64,
    pub k: f64,
}

impl Default for Hetero {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma_star: 2.0,
            a: 0.5,
            k: 4.0,
        }
    }
}

impl Hetero {
    pub fn sigma(&self, tau: f64) -> f64 {
        self.sigma0 + (self.sigma_star - self.sigma0) * tau + self.a * (TAU * self.k * tau).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrendSpec {
    /// `intercept + slope t + delta max(t − break_frac T, 0)`, per grid step.
    Linear {
        intercept: f64,
        slope: f64,
        delta: f64,
        break_frac: f64,
    },
    /// `γ₁ + γ₂ G(τ, λ, c₁) + γ₃ G(τ, λ, c₂)` with logistic `G`.
    SmoothTransition {
        gamma: [f64; 3],
        lambda: f64,
        c: [f64; 2],
    },
}

impl TrendSpec {
    pub fn smooth_transition_default() -> Self {
        TrendSpec::SmoothTransition {
            gamma: [1.0, 1.0, -0.5],
            lambda: 10.0,
            c: [0.2, 0.6],
        }
    }
}

/// Logistic transition `(1 + exp(−λ(τ − c)))⁻¹`.
pub fn transition(tau: f64, lambda: f64, c: f64) -> f64 {
    1.0 / (1.0 + (-lambda * (tau - c)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McDesign {
    pub t: usize,
    pub missing: MissingMode,
    pub phi: f64,
    pub psi: f64,
    pub sigma_eta: f64,
    pub hetero: Option<Hetero>,
    pub trend: TrendSpec,
}

impl McDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::invalid(format!("|phi| must be below 1, got {}", self.phi)));
        }
        if !(self.sigma_eta > 0.0) {
            return Err(Error::invalid("sigma_eta must be positive"));
        }
        if self.t < 10 {
            return Err(Error::invalid("Monte Carlo series need at least 10 points"));
        }
        if let TrendSpec::Linear { break_frac, .. } = self.trend {
            if !(break_frac > 0.0 && break_frac < 1.0) {
                return Err(Error::invalid("break_frac must lie in (0,1)"));
            }
        }
        Ok(())
    }

    /// Standard deviation of the ARMA innovations giving `Var(η) = σ_η²/2`.
    pub fn innovation_sd(&self) -> f64 {
        let (phi, psi) = (self.phi, self.psi);
        ((1.0 - phi * phi) * self.sigma_eta.powi(2) / (2.0 * (1.0 + psi * psi + 2.0 * phi * psi))).sqrt()
    }
}

/// `u_t = σ_t η_t` with ARMA(1,1) `η` after a burn-in.
pub fn gen_errors(design: &McDesign, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    design.validate()?;
    let noise = Normal::new(0.0, design.innovation_sd())
        .map_err(|e| Error::invalid(format!("innovation distribution: {e}")))?;
    let (mut eta, mut prev_eps) = (0.0, noise.sample(rng));
    let mut out = Vec::with_capacity(design.t);
    for step in 0..BURN_IN + design.t {
        let eps: f64 = noise.sample(rng);
        eta = design.phi * eta + design.psi * prev_eps + eps;
        prev_eps = eps;
        if step >= BURN_IN {
            out.push(eta);
        }
    }
    if let Some(h) = design.hetero {
        let n = design.t as f64;
        for (i, u) in out.iter_mut().enumerate() {
            *u *= h.sigma((i + 1) as f64 / n);
        }
    }
    Ok(out)
}

/// Markov-chain observation indicators started from the stationary law.
pub fn gen_mask(mode: MissingMode, len: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let p = mode.transition();
    let mut state = rng.gen::<f64>() < mode.observed_fraction();
    let mut mask = Vec::with_capacity(len);
    for _ in 0..len {
        mask.push(state);
        let stay_or_go = p[state as usize][1];
        state = rng.gen::<f64>() < stay_or_go;
    }
    mask
}

pub fn gen_trend(design: &McDesign) -> Vec<f64> {
    let n = design.t;
    match design.trend {
        TrendSpec::Linear {
            intercept,
            slope,
            delta,
            break_frac,
        } => {
            let t1 = break_frac * n as f64;
            (1..=n)
                .map(|t| {
                    let t = t as f64;
                    intercept + slope * t + delta * (t - t1).max(0.0)
                })
                .collect()
        }
        TrendSpec::SmoothTransition { gamma, lambda, c } => (1..=n)
            .map(|t| {
                let tau = t as f64 / n as f64;
                gamma[0] + gamma[1] * transition(tau, lambda, c[0]) + gamma[2] * transition(tau, lambda, c[1])
            })
            .collect(),
    }
}

/// One synthetic observed series.
pub fn simulate(design: &McDesign, seed: u64) -> Result<ObservedSeries> {
    let mut rng = awb::stream(seed, ERROR_DOMAIN, 0);
    let u = gen_errors(design, &mut rng)?;
    let mut mrng = awb::stream(seed, MASK_DOMAIN, 0);
    let mask = gen_mask(design.missing, design.t, &mut mrng);
    let y: Vec<f64> = gen_trend(design).iter().zip(&u).map(|(g, e)| g + e).collect();
    ObservedSeries::new(y, mask, reference_date())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum Procedure {
    BreakTest { alpha: f64, harmonics: usize },
    BreakCi { level: f64, harmonics: usize },
    Linearity { h: f64, kind: ExtremumKind, alpha: f64 },
    Monotonicity { h: f64, alpha: f64 },
}

impl Procedure {
    pub fn metric_names(&self) -> &'static [&'static str] {
        match self {
            Procedure::BreakTest { .. } => &["reject"],
            Procedure::BreakCi { .. } => &["coverage", "length"],
            Procedure::Linearity { .. } => &["reject_ave", "reject_sup"],
            Procedure::Monotonicity { .. } => &["reject_u1", "reject_u2"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: u64,
    pub design: McDesign,
    pub procedure: Procedure,
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs one replicate of `cell`; returns the procedure's metrics.
pub fn run_replicate(cell: &Cell, seed: u64, rep: usize, replicates: usize) -> Result<Vec<f64>> {
    let data_seed = awb::derive_seed(&[seed, cell.id, rep as u64]);
    let boot_seed = awb::derive_seed(&[seed, cell.id, rep as u64, 1]);
    let s = simulate(&cell.design, data_seed)?;
    let t = s.len();
    let cfg = AwbConfig::new(t, awb::DEFAULT_THETA, replicates, boot_seed)?;
    match cell.procedure {
        Procedure::BreakTest { alpha, harmonics } => {
            let trim = TrimmingSet::new(DEFAULT_LAMBDA, t)?;
            let scanner = BreakScanner::new(&s, trim, harmonics)?;
            let r = breaktrend::break_test_with(&scanner, &s, &cfg, alpha)?;
            Ok(vec![indicator(r.reject)])
        }
        Procedure::BreakCi { level, harmonics } => {
            let trim = TrimmingSet::new(DEFAULT_LAMBDA, t)?;
            let scanner = BreakScanner::new(&s, trim, harmonics)?;
            let fit = breaktrend::estimate_with(&scanner, &s)?;
            let ci = breaktrend::break_ci_with(&scanner, &s, &fit, &cfg, level)?;
            let truth = match cell.design.trend {
                TrendSpec::Linear { break_frac, .. } => break_frac * t as f64,
                TrendSpec::SmoothTransition { .. } => {
                    return Err(Error::invalid("break intervals need a linear trend design"))
                }
            };
            Ok(vec![
                indicator(ci.lower <= truth && truth <= ci.upper),
                ci.upper - ci.lower,
            ])
        }
        Procedure::Linearity { h, kind, alpha } => {
            let fit = nw_estimate(&s, h, Kernel::Epanechnikov)?;
            let anchor = shapetests::locate_extremum(&fit, kind)?;
            let r = shapetests::linearity_test_at(&s, &fit, anchor, &cfg, alpha)?;
            Ok(vec![indicator(r.reject_ave), indicator(r.reject_sup)])
        }
        Procedure::Monotonicity { h, alpha } => {
            let fit = nw_estimate(&s, h, Kernel::Epanechnikov)?;
            let r = shapetests::monotonicity_tests(&s, &fit, (1, t), &cfg, None, alpha)?;
            Ok(vec![indicator(r.reject1), indicator(r.reject2)])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub replications: usize,
    pub failures: usize,
    pub metric_names: Vec<String>,
    pub means: Vec<f64>,
    /// Monte Carlo standard errors of the means.
    pub std_errors: Vec<f64>,
    /// First failure message, if any.
    pub first_failure: Option<String>,
}

pub fn run_cell(cell: &Cell, replications: usize, replicates: usize, seed: u64) -> CellResult {
    let outcomes: Vec<Result<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|r| run_replicate(cell, seed, r, replicates))
        .collect();
    let names = cell.procedure.metric_names();
    let ok: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let first_failure = outcomes
        .iter()
        .find_map(|o| o.as_ref().err().map(|e| e.to_string()));
    let n = ok.len() as f64;
    let mut means = vec![f64::NAN; names.len()];
    let mut std_errors = vec![f64::NAN; names.len()];
    for k in 0..names.len() {
        if ok.is_empty() {
            break;
        }
        let mean = ok.iter().map(|m| m[k]).sum::<f64>() / n;
        let var = if ok.len() > 1 {
            ok.iter().map(|m| (m[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        means[k] = mean;
        std_errors[k] = (var / n).sqrt();
    }
    CellResult {
        cell: *cell,
        replications,
        failures: replications - ok.len(),
        metric_names: names.iter().map(|s| s.to_string()).collect(),
        means,
        std_errors,
        first_failure,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Panel {
    A,
    B,
    C,
    D,
}

impl Panel {
    pub fn default_sigma_eta(self) -> f64 {
        match self {
            Panel::A | Panel::B => BREAK_SIGMA_ETA,
            Panel::C | Panel::D => SHAPE_SIGMA_ETA,
        }
    }
}

impl std::str::FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Panel::A),
            "B" => Ok(Panel::B),
            "C" => Ok(Panel::C),
            "D" => Ok(Panel::D),
            other => Err(Error::invalid(format!("unknown panel {other}; use A, B, C or D"))),
        }
    }
}

/// Noise scale for the break-point panels; see [`panel_cells`].
pub const BREAK_SIGMA_ETA: f64 = 23.5;
/// Noise scale for the trend-shape panels.
pub const SHAPE_SIGMA_ETA: f64 = 0.5;

/// `(T, missing mode)` combinations of the break and linearity panels.
pub const SAMPLE_DESIGNS: [(usize, MissingMode); 3] = [
    (285, MissingMode::Low),
    (666, MissingMode::High),
    (666, MissingMode::Low),
];

const ARMA: [(f64, f64); 3] = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)];

fn broken_line(delta: f64) -> TrendSpec {
    TrendSpec::Linear {
        intercept: 4000.0,
        slope: -0.5,
        delta,
        break_frac: 0.6,
    }
}

/// Increasing line rising by 0.5 over the sample.
fn shape_null(t: usize) -> TrendSpec {
    TrendSpec::Linear {
        intercept: 1.0,
        slope: 0.5 / t as f64,
        delta: 0.0,
        break_frac: 0.6,
    }
}

/// Every cell of a panel, in a fixed order; cell ids are stable.
///
/// Every design in the panel uses `sigma_eta` as its noise scale.
pub fn panel_cells(panel: Panel, sigma_eta: f64, harmonics: usize) -> Vec<Cell> {
    let mut cells = Vec::new();
    let base = match panel {
        Panel::A => 1000,
        Panel::B => 2000,
        Panel::C => 3000,
        Panel::D => 4000,
    };
    let mut push = |design: McDesign, procedure: Procedure| {
        let id = base + cells.len() as u64;
        cells.push(Cell {
            id,
            design,
            procedure,
        });
    };
    match panel {
        Panel::A | Panel::B => {
            let deltas: &[f64] = if panel == Panel::A {
                &[0.0, 0.05, 0.1]
            } else {
                &[1.0]
            };
            for (phi, psi) in ARMA {
                for (t, missing) in SAMPLE_DESIGNS {
                    for hetero in [None, Some(Hetero::default())] {
                        for &delta in deltas {
                            let design = McDesign {
                                t,
                                missing,
                                phi,
                                psi,
                                sigma_eta,
                                hetero,
                                trend: broken_line(delta),
                            };
                            let procedure = if panel == Panel::A {
                                Procedure::BreakTest {
                                    alpha: 0.05,
                                    harmonics,
                                }
                            } else {
                                Procedure::BreakCi {
                                    level: 0.95,
                                    harmonics,
                                }
                            };
                            push(design, procedure);
                        }
                    }
                }
            }
        }
        Panel::C | Panel::D => {
            let samples: &[(usize, MissingMode)] = if panel == Panel::C {
                &SAMPLE_DESIGNS
            } else {
                &SAMPLE_DESIGNS[..2]
            };
            for h in [0.04, 0.06, 0.08] {
                for &(t, missing) in samples {
                    for trend in [shape_null(t), TrendSpec::smooth_transition_default()] {
                        let design = McDesign {
                            t,
                            missing,
                            phi: 0.1,
                            psi: 0.0,
                            sigma_eta,
                            hetero: None,
                            trend,
                        };
                        let procedure = if panel == Panel::C {
                            Procedure::Linearity {
                                h,
                                kind: ExtremumKind::Min,
                                alpha: 0.05,
                            }
                        } else {
                            Procedure::Monotonicity { h, alpha: 0.05 }
                        };
                        push(design, procedure);
                    }
                }
            }
        }
    }
    cells
}

/// Cell results as CSV rows, one per cell.
pub fn write_table<W: std::io::Write>(results: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cell",
        "procedure",
        "T",
        "missing",
        "phi",
        "psi",
        "hetero",
        "sigma_eta",
        "trend",
        "delta",
        "h",
        "replications",
        "failures",
        "metric",
        "mean",
        "mc_se",
    ])?;
    for r in results {
        let d = &r.cell.design;
        let (proc_name, h) = match r.cell.procedure {
            Procedure::BreakTest { .. } => ("break_test", String::new()),
            Procedure::BreakCi { .. } => ("break_ci", String::new()),
            Procedure::Linearity { h, .. } => ("linearity", h.to_string()),
            Procedure::Monotonicity { h, .. } => ("monotonicity", h.to_string()),
        };
        let (trend, delta) = match d.trend {
            TrendSpec::Linear { delta, .. } => ("linear", delta.to_string()),
            TrendSpec::SmoothTransition { .. } => ("smooth_transition", String::new()),
        };
        for (k, name) in r.metric_names.iter().enumerate() {
            w.write_record([
                r.cell.id.to_string(),
                proc_name.to_string(),
                d.t.to_string(),
                d.missing.label().to_string(),
                d.phi.to_string(),
                d.psi.to_string(),
                d.hetero.is_some().to_string(),
                d.sigma_eta.to_string(),
                trend.to_string(),
                delta.clone(),
                h.clone(),
                r.replications.to_string(),
                r.failures.to_string(),
                name.clone(),
                format!("{:.6}", r.means[k]),
                format!("{:.6}", r.std_errors[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(phi: f64, psi: f64) -> McDesign {
        McDesign {
            t: 1_000_000,
            missing: MissingMode::Low,
            phi,
            psi,
            sigma_eta: 1.0,
            hetero: None,
            trend: broken_line(0.0),
        }
    }

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let cov = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
        (var, cov / var)
    }

    #[test]
    fn white_noise_has_half_unit_variance() {
        let u = gen_errors(&design(0.0, 0.0), &mut awb::stream(1, 2, 3)).unwrap();
        let (var, _) = moments(&u);
        assert!((var - 0.5).abs() < 0.005, "{var}");
    }

    #[test]
    fn ar1_moments() {
        let u = gen_errors(&design(0.5, 0.0), &mut awb::stream(4, 5, 6)).unwrap();
        let (var, rho) = moments(&u);
        assert!((var - 0.5).abs() < 0.01, "{var}");
        assert!((rho - 0.5).abs() < 0.01, "{rho}");
    }

    #[test]
    fn unstable_ar_is_rejected() {
        assert!(gen_errors(&design(1.0, 0.0), &mut awb::stream(0, 0, 0)).is_err());
    }

    #[test]
    fn hetero_endpoints() {
        let h = Hetero::default();
        assert!((h.sigma(0.0) - 1.5).abs() < 1e-12);
        assert!((h.sigma(1.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn mask_frequencies() {
        for mode in [MissingMode::Low, MissingMode::High] {
            let m = gen_mask(mode, 1_000_000, &mut awb::stream(9, 9, 9));
            let frac = m.iter().filter(|&&b| b).count() as f64 / m.len() as f64;
            assert!((frac - mode.observed_fraction()).abs() < 0.01, "{frac}");
            let p = mode.transition();
            for from in [false, true] {
                let from_count = m[..m.len() - 1].iter().filter(|&&b| b == from).count() as f64;
                let to_obs = m.windows(2).filter(|w| w[0] == from && w[1]).count() as f64;
                assert!((to_obs / from_count - p[from as usize][1]).abs() < 0.01);
            }
        }
        assert!((MissingMode::Low.observed_fraction() - 9.0 / 13.0).abs() < 1e-12);
        assert!((MissingMode::High.observed_fraction() - 4.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn trends() {
        assert_eq!(transition(0.3, 7.0, 0.3), 0.5);
        let d = McDesign {
            t: 100,
            ..design(0.0, 0.0)
        };
        let g = gen_trend(&d);
        assert!(g.windows(2).all(|w| (w[1] - w[0] + 0.5).abs() < 1e-12));
        let st = gen_trend(&McDesign {
            trend: TrendSpec::smooth_transition_default(),
            ..d
        });
        let peak = st
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > st[b] { i } else { b });
        assert!((1.0 - st[0]).abs() < 0.2);
        assert!((30..60).contains(&peak), "{peak}");
        assert!(st[99] < st[peak] - 0.2);
    }

    #[test]
    fn single_replication_gives_binary_frequency() {
        let mut cell = panel_cells(Panel::A, BREAK_SIGMA_ETA, 0)[0];
        cell.design.t = 120;
        let r = run_cell(&cell, 1, 19, 3);
        assert_eq!(r.failures, 0);
        assert!(r.means[0] == 0.0 || r.means[0] == 1.0);
    }
}
