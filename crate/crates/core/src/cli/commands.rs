use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::svg::{Chart, Layer};
use super::{AwbArgs, Cli, Command, InputArgs, ValuesArg};
use crate::awb::AwbConfig;
use crate::breaktrend::{self, BreakScanner, Interval, TrimmingSet};
use crate::kerneltrend::{self, Kernel, KernelTrendFit};
use crate::mcharness::{self, Panel};
use crate::seasonal::{self, SeasonalFit};
use crate::series::{self, IngestSummary, ObservedSeries};
use crate::shapetests::{self, ExtremumKind};
use crate::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct Report<'a, P: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    input: &'a InputInfo,
    parameters: P,
    results: R,
    /// File names written next to this report.
    artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InputInfo {
    path: String,
    sha256: String,
}

/// What `smooth` leaves behind for the shape subcommands.
#[derive(Debug, Serialize, Deserialize)]
struct TrendArtifact {
    version: String,
    source: InputInfo,
    harmonics: usize,
    /// Fitted seasonal component; adding it back gives the raw values.
    seasonal: Vec<f64>,
    /// Deseasonalised series the trend was fitted to.
    series: ObservedSeries,
    fit: KernelTrendFit,
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the report last so it can list every other artifact.
    fn report<P: Serialize, R: Serialize>(
        &mut self,
        name: &str,
        command: &str,
        seed: u64,
        input: &InputInfo,
        parameters: P,
        results: R,
    ) -> Result<()> {
        let report = Report {
            tool: "trendinfer",
            version: VERSION,
            command,
            seed,
            input,
            parameters,
            results,
            artifacts: self.written.clone(),
        };
        self.json(name, &report)?;
        println!("wrote {}", self.dir.join(name).display());
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<(Vec<u8>, InputInfo)> {
    let bytes =
        fs::read(path).map_err(|e| Error::invalid(format!("cannot read input {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((
        bytes,
        InputInfo {
            path: path.display().to_string(),
            sha256,
        },
    ))
}

fn load_series(args: &InputArgs) -> Result<(ObservedSeries, IngestSummary, InputInfo)> {
    let (bytes, info) = read_input(&args.input)?;
    let (s, summary) = series::ingest_reader(bytes.as_slice(), &args.date_column, &args.value_column)?;
    Ok((s, summary, info))
}

fn load_artifact(path: &Path) -> Result<(TrendArtifact, InputInfo)> {
    let (bytes, info) = read_input(path)?;
    let artifact: TrendArtifact = serde_json::from_slice(&bytes)
        .map_err(|e| Error::invalid(format!("{} is not a trend artifact: {e}", path.display())))?;
    if artifact.fit.len() != artifact.series.len() {
        return Err(Error::LengthMismatch {
            expected: artifact.series.len(),
            actual: artifact.fit.len(),
        }
        .into());
    }
    Ok((artifact, info))
}

fn awb_config(a: &AwbArgs, len: usize, seed: u64) -> Result<AwbConfig> {
    let cfg = AwbConfig::new(len, a.theta, a.b, seed)?;
    Ok(match a.gamma {
        Some(g) => cfg.with_gamma(g)?,
        None => cfg,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn date_str(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

fn observed_points(s: &ObservedSeries) -> Vec<(f64, f64)> {
    (0..s.len())
        .filter_map(|i| s.get(i).map(|v| (s.calendar(i), v)))
        .collect()
}

fn curve(s: &ObservedSeries, values: &[Option<f64>]) -> Vec<Option<(f64, f64)>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v.map(|v| (s.calendar(i), v)))
        .collect()
}

pub(super) fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.global.seed;
    let mut out = Output::new(&cli.global.out)?;
    match &cli.command {
        Command::Ingest { input } => ingest(&mut out, seed, input),
        Command::Break {
            input,
            lambda,
            fourier,
            awb,
            level,
            alpha,
        } => break_cmd(&mut out, seed, input, *lambda, *fourier, awb, *level, *alpha),
        Command::Smooth {
            input,
            fourier,
            bandwidth,
            pick_minimum,
            mcv_grid,
            mcv_k,
            awb,
            level,
        } => smooth(
            &mut out,
            seed,
            SmoothParams {
                input,
                fourier: *fourier,
                bandwidth: *bandwidth,
                pick_minimum: *pick_minimum,
                mcv_grid,
                mcv_k: *mcv_k,
                awb,
                level: *level,
            },
        ),
        Command::Extremum {
            trend,
            kind,
            awb,
            level,
        } => extremum(&mut out, seed, trend, (*kind).into(), awb, *level),
        Command::Lintest {
            trend,
            kind,
            awb,
            alpha,
        } => lintest(&mut out, seed, trend, (*kind).into(), awb, *alpha),
        Command::Monotest {
            trend,
            interval,
            h_u,
            values,
            awb,
            alpha,
        } => monotest(
            &mut out,
            seed,
            trend,
            interval.as_deref(),
            *h_u,
            *values,
            awb,
            *alpha,
        ),
        Command::Mc {
            panel,
            replications,
            b,
            scale,
            sigma_eta,
            fourier,
        } => mc(
            &mut out,
            seed,
            *panel,
            *replications,
            *b,
            *scale,
            *sigma_eta,
            *fourier,
        ),
    }
}

fn ingest(out: &mut Output, seed: u64, input: &InputArgs) -> Result<()> {
    let (s, summary, info) = load_series(input)?;
    let p = out.path("series.csv");
    s.write_canonical_csv(fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?)?;
    #[derive(Serialize)]
    struct Params<'a> {
        date_column: &'a str,
        value_column: &'a str,
    }
    out.report(
        "ingest.json",
        "ingest",
        seed,
        &info,
        Params {
            date_column: &input.date_column,
            value_column: &input.value_column,
        },
        summary,
    )
}

#[derive(Serialize)]
struct AwbParams {
    replicates: usize,
    theta: f64,
    gamma: f64,
    l: f64,
}

impl From<&AwbConfig> for AwbParams {
    fn from(c: &AwbConfig) -> Self {
        Self {
            replicates: c.replicates,
            theta: c.theta,
            gamma: c.gamma,
            l: c.l,
        }
    }
}

#[derive(Serialize)]
struct SeasonalSummary<'a> {
    harmonics: usize,
    cos: &'a [f64],
    sin: &'a [f64],
}

impl<'a> From<&'a SeasonalFit> for SeasonalSummary<'a> {
    fn from(f: &'a SeasonalFit) -> Self {
        Self {
            harmonics: f.harmonics,
            cos: &f.a,
            sin: &f.b,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn break_cmd(
    out: &mut Output,
    seed: u64,
    input: &InputArgs,
    lambda: f64,
    fourier: usize,
    awb: &AwbArgs,
    level: f64,
    alpha: f64,
) -> Result<()> {
    let (s, summary, info) = load_series(input)?;
    let cfg = awb_config(awb, s.len(), seed)?;
    let trim = TrimmingSet::new(lambda, s.len())?;
    let scanner = BreakScanner::new(&s, trim, fourier)?;
    let fit = breaktrend::estimate_with(&scanner, &s)?;
    info!(
        "break at t={}; running {} replicates per bootstrap",
        fit.break_time, cfg.replicates
    );
    let test = breaktrend::break_test_with(&scanner, &s, &cfg, alpha)?;
    let ci = breaktrend::break_ci_with(&scanner, &s, &fit, &cfg, level)?;
    let slopes = breaktrend::slope_cis(&s, &fit, &cfg, level)?;

    let trend = fit.trend(s.len());
    let fitted = fit.fitted();
    out.csv(
        "break_trend.csv",
        &["date", "year", "value", "observed", "trend", "seasonal", "fitted"],
        (0..s.len())
            .map(|i| {
                vec![
                    date_str(s.date(i)),
                    s.calendar(i).to_string(),
                    opt(s.get(i)),
                    u8::from(s.mask()[i]).to_string(),
                    trend[i].to_string(),
                    fit.seasonal.fitted[i].to_string(),
                    fitted[i].to_string(),
                ]
            })
            .collect(),
    )?;
    out.csv(
        "break_profile.csv",
        &["break_time", "date", "ssr"],
        scanner
            .profile(s.values())
            .into_iter()
            .map(|(t, ssr)| vec![t.to_string(), date_str(s.date(t - 1)), ssr.to_string()])
            .collect(),
    )?;
    out.csv(
        "break_bootstrap.csv",
        &["replicate", "f_statistic", "break_time"],
        test.bootstrap_stats
            .iter()
            .zip(&ci.bootstrap_times)
            .enumerate()
            .map(|(b, (f, t))| vec![b.to_string(), f.to_string(), t.to_string()])
            .collect(),
    )?;
    let mut chart = Chart::new("Broken linear trend", "year", input.value_column.as_str());
    chart.layers.push(Layer::Points {
        points: observed_points(&s),
        color: "#888888",
    });
    chart.layers.push(Layer::Line {
        points: (0..s.len()).map(|i| Some((s.calendar(i), trend[i]))).collect(),
        color: "#c0392b",
        width: 2.0,
        dashed: false,
    });
    for x in [ci.lower_year, ci.estimate_year, ci.upper_year] {
        chart.layers.push(Layer::VLine { x, color: "#2c3e50" });
    }
    out.text("break.svg", &chart.render())?;

    #[derive(Serialize)]
    struct Params<'a> {
        date_column: &'a str,
        value_column: &'a str,
        lambda: f64,
        fourier: usize,
        level: f64,
        alpha: f64,
        awb: AwbParams,
    }
    #[derive(Serialize)]
    struct Coefficients {
        intercept: f64,
        beta_per_step: f64,
        delta_per_step: f64,
        beta_per_year: f64,
        delta_per_year: f64,
        post_slope_per_year: f64,
    }
    #[derive(Serialize)]
    struct Test {
        statistic: f64,
        critical_value: f64,
        p_value: f64,
        alpha: f64,
        reject: bool,
    }
    #[derive(Serialize)]
    struct Ci {
        level: f64,
        estimate: usize,
        lower: f64,
        upper: f64,
        estimate_date: String,
        lower_date: String,
        upper_date: String,
        estimate_year: f64,
        lower_year: f64,
        upper_year: f64,
    }
    #[derive(Serialize)]
    struct SlopeIntervals {
        level: f64,
        intercept: Interval,
        beta_per_year: Interval,
        delta_per_year: Interval,
        post_slope_per_year: Interval,
    }
    #[derive(Serialize)]
    struct Results<'a> {
        series: IngestSummary,
        trimming: TrimmingSet,
        skipped_candidates: Vec<usize>,
        break_time: usize,
        break_date: String,
        ssr: f64,
        coefficients: Coefficients,
        seasonal: SeasonalSummary<'a>,
        test: Test,
        break_ci: Ci,
        slope_cis: SlopeIntervals,
    }
    let results = Results {
        series: summary,
        trimming: trim,
        skipped_candidates: scanner.skipped(),
        break_time: fit.break_time,
        break_date: date_str(s.date(fit.break_time - 1)),
        ssr: fit.ssr,
        coefficients: Coefficients {
            intercept: fit.alpha,
            beta_per_step: fit.beta,
            delta_per_step: fit.delta,
            beta_per_year: fit.beta_per_year(),
            delta_per_year: fit.delta_per_year(),
            post_slope_per_year: fit.post_slope_per_year(),
        },
        seasonal: (&fit.seasonal).into(),
        test: Test {
            statistic: test.statistic,
            critical_value: test.critical_value,
            p_value: test.p_value,
            alpha: test.alpha,
            reject: test.reject,
        },
        break_ci: Ci {
            level: ci.level,
            estimate: ci.estimate,
            lower: ci.lower,
            upper: ci.upper,
            estimate_date: date_str(ci.estimate_date),
            lower_date: date_str(ci.lower_date),
            upper_date: date_str(ci.upper_date),
            estimate_year: ci.estimate_year,
            lower_year: ci.lower_year,
            upper_year: ci.upper_year,
        },
        slope_cis: SlopeIntervals {
            level: slopes.level,
            intercept: slopes.alpha,
            beta_per_year: slopes.beta,
            delta_per_year: slopes.delta,
            post_slope_per_year: slopes.post_slope,
        },
    };
    out.report(
        "break.json",
        "break",
        seed,
        &info,
        Params {
            date_column: &input.date_column,
            value_column: &input.value_column,
            lambda,
            fourier,
            level,
            alpha,
            awb: (&cfg).into(),
        },
        results,
    )
}

struct SmoothParams<'a> {
    input: &'a InputArgs,
    fourier: usize,
    bandwidth: Option<f64>,
    pick_minimum: Option<usize>,
    mcv_grid: &'a str,
    mcv_k: Option<usize>,
    awb: &'a AwbArgs,
    level: f64,
}

fn parse_grid(raw: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad grid {raw:?}; expected lo:hi:step")))?;
    if nums.len() != 3 {
        return Err(Error::invalid(format!("bad grid {raw:?}; expected lo:hi:step")).into());
    }
    Ok(kerneltrend::bandwidth_grid(nums[0], nums[1], nums[2])?)
}

/// Intercept plus Fourier terms; only the seasonal part is removed.
fn deseasonalise(s: &ObservedSeries, harmonics: usize) -> Result<(ObservedSeries, SeasonalFit)> {
    if harmonics == 0 {
        return Ok((s.clone(), SeasonalFit::none(s.len())));
    }
    let f = seasonal::fit_seasonal(s, &[vec![1.0; s.len()]], harmonics)?;
    Ok((seasonal::deseasonalize(s, &f)?, f))
}

fn smooth(out: &mut Output, seed: u64, p: SmoothParams<'_>) -> Result<()> {
    let (s, summary, info) = load_series(p.input)?;
    let (eps, seasonal_fit) = deseasonalise(&s, p.fourier)?;
    let cfg = awb_config(p.awb, s.len(), seed)?;
    if let Some(h) = p.bandwidth {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::invalid(format!("bandwidth must lie in (0,1), got {h}")).into());
        }
    }

    #[derive(Serialize)]
    struct McvSummary {
        k: usize,
        grid_size: usize,
        local_minima: Vec<f64>,
        global_minimum: f64,
        no_interior_minimum: bool,
        chosen: Option<f64>,
    }
    let mcv = match p.bandwidth {
        Some(_) => None,
        None => {
            let grid = parse_grid(p.mcv_grid)?;
            let k = p.mcv_k.unwrap_or_else(|| kerneltrend::default_leave_out(s.len()));
            let mut m = kerneltrend::mcv_scan(&eps, &grid, k)?;
            if let Some(n) = p.pick_minimum {
                m.pick_minimum(n)?;
            }
            out.csv(
                "mcv.csv",
                &["bandwidth", "score", "local_minimum"],
                m.grid
                    .iter()
                    .zip(&m.scores)
                    .enumerate()
                    .map(|(i, (h, sc))| {
                        vec![
                            h.to_string(),
                            sc.to_string(),
                            u8::from(m.local_minima.contains(&i)).to_string(),
                        ]
                    })
                    .collect(),
            )?;
            let mut chart = Chart::new("Modified cross-validation", "bandwidth", "score");
            chart.layers.push(Layer::Line {
                points: m
                    .grid
                    .iter()
                    .zip(&m.scores)
                    .map(|(&h, &sc)| Some((h, sc)))
                    .collect(),
                color: "#2c3e50",
                width: 1.5,
                dashed: false,
            });
            for &i in &m.local_minima {
                chart.layers.push(Layer::VLine {
                    x: m.grid[i],
                    color: "#c0392b",
                });
            }
            out.text("mcv.svg", &chart.render())?;
            Some(m)
        }
    };
    let mcv_summary = mcv.as_ref().map(|m| McvSummary {
        k: m.k,
        grid_size: m.grid.len(),
        local_minima: m.local_minima.iter().map(|&i| m.grid[i]).collect(),
        global_minimum: m.grid[m.global_minimum],
        no_interior_minimum: m.no_interior_minimum,
        chosen: m.chosen,
    });

    #[derive(Serialize)]
    struct Params<'a> {
        date_column: &'a str,
        value_column: &'a str,
        fourier: usize,
        bandwidth: Option<f64>,
        pick_minimum: Option<usize>,
        mcv_grid: Option<&'a str>,
        level: f64,
        kernel: Kernel,
        awb: AwbParams,
    }
    let params = Params {
        date_column: &p.input.date_column,
        value_column: &p.input.value_column,
        fourier: p.fourier,
        bandwidth: p.bandwidth,
        pick_minimum: p.pick_minimum,
        mcv_grid: mcv.as_ref().map(|_| p.mcv_grid),
        level: p.level,
        kernel: Kernel::Epanechnikov,
        awb: (&cfg).into(),
    };

    let h = match (p.bandwidth, mcv.as_ref().and_then(|m| m.chosen)) {
        (Some(h), _) | (None, Some(h)) => h,
        (None, None) => {
            #[derive(Serialize)]
            struct Pending {
                series: IngestSummary,
                mcv: Option<McvSummary>,
                message: String,
            }
            let m = mcv.as_ref().expect("computed when no bandwidth is given");
            let message = if m.no_interior_minimum {
                "the cross-validation score has no interior local minimum; choose --bandwidth".to_string()
            } else {
                format!(
                    "bandwidth choice required: interior local minima at {:?}; rerun with --bandwidth or --pick-minimum n",
                    mcv_summary.as_ref().map(|s| s.local_minima.clone()).unwrap_or_default()
                )
            };
            out.report(
                "smooth.json",
                "smooth",
                seed,
                &info,
                params,
                Pending {
                    series: summary,
                    mcv: mcv_summary,
                    message: message.clone(),
                },
            )?;
            return Err(Error::invalid(message).into());
        }
    };

    let fit = kerneltrend::nw_estimate(&eps, h, Kernel::Epanechnikov)?;
    let boot = kerneltrend::trend_bootstrap(&eps, &fit, &cfg)?;
    let pw = boot.pointwise(p.level)?;
    let sim = kerneltrend::simultaneous_bands(&boot, p.level)?;

    out.csv(
        "trend.csv",
        &[
            "date",
            "year",
            "deseasonalised",
            "observed",
            "trend",
            "pointwise_lower",
            "pointwise_upper",
            "lower",
            "upper",
        ],
        (0..s.len())
            .map(|i| {
                vec![
                    date_str(s.date(i)),
                    s.calendar(i).to_string(),
                    opt(eps.get(i)),
                    u8::from(s.mask()[i]).to_string(),
                    opt(fit.g_hat[i]),
                    opt(pw.lower[i]),
                    opt(pw.upper[i]),
                    opt(sim.lower[i]),
                    opt(sim.upper[i]),
                ]
            })
            .collect(),
    )?;
    let mut chart = Chart::new(
        format!("Kernel trend, h = {h}, {}% simultaneous band", p.level * 100.0),
        "year",
        p.input.value_column.as_str(),
    );
    chart.layers.push(Layer::Points {
        points: observed_points(&eps),
        color: "#bbbbbb",
    });
    for (band, color) in [(&sim.lower, "#2980b9"), (&sim.upper, "#2980b9")] {
        chart.layers.push(Layer::Line {
            points: curve(&s, band),
            color,
            width: 1.0,
            dashed: true,
        });
    }
    chart.layers.push(Layer::Line {
        points: curve(&s, &fit.g_hat),
        color: "#c0392b",
        width: 2.0,
        dashed: false,
    });
    out.text("trend.svg", &chart.render())?;

    let artifact = TrendArtifact {
        version: VERSION.to_string(),
        source: info.clone(),
        harmonics: p.fourier,
        seasonal: seasonal_fit.fitted.clone(),
        series: eps,
        fit,
    };
    out.json("trend_fit.json", &artifact)?;

    #[derive(Serialize)]
    struct Results<'a> {
        series: IngestSummary,
        seasonal: SeasonalSummary<'a>,
        bandwidth: f64,
        pilot_bandwidth: f64,
        undefined_points: usize,
        mcv: Option<McvSummary>,
        level: f64,
        alpha_s: f64,
        simultaneous_coverage: Option<f64>,
        under_covered: bool,
    }
    out.report(
        "smooth.json",
        "smooth",
        seed,
        &info,
        params,
        Results {
            series: summary,
            seasonal: (&seasonal_fit).into(),
            bandwidth: h,
            pilot_bandwidth: boot.pilot_h,
            undefined_points: artifact.fit.undefined_count(),
            mcv: mcv_summary,
            level: p.level,
            alpha_s: sim.alpha_s,
            simultaneous_coverage: sim.coverage,
            under_covered: sim.under_covered,
        },
    )
}

#[derive(Serialize)]
struct ShapeParams {
    trend_bandwidth: f64,
    awb: AwbParams,
}

fn extremum(
    out: &mut Output,
    seed: u64,
    trend: &Path,
    kind: ExtremumKind,
    awb: &AwbArgs,
    level: f64,
) -> Result<()> {
    let (a, info) = load_artifact(trend)?;
    let cfg = awb_config(awb, a.series.len(), seed)?;
    let mut r = shapetests::extremum_ci(&a.series, &a.fit, &cfg, kind, level)?;
    let locations = std::mem::take(&mut r.bootstrap_locations);
    out.csv(
        "extremum_bootstrap.csv",
        &["replicate", "location", "date"],
        locations
            .iter()
            .enumerate()
            .map(|(b, &t)| vec![b.to_string(), t.to_string(), date_str(a.series.date(t - 1))])
            .collect(),
    )?;
    #[derive(Serialize)]
    struct Params {
        kind: ExtremumKind,
        level: f64,
        #[serde(flatten)]
        shape: ShapeParams,
    }
    out.report(
        "extremum.json",
        "extremum",
        seed,
        &info,
        Params {
            kind,
            level,
            shape: ShapeParams {
                trend_bandwidth: a.fit.h,
                awb: (&cfg).into(),
            },
        },
        r,
    )
}

fn lintest(
    out: &mut Output,
    seed: u64,
    trend: &Path,
    kind: ExtremumKind,
    awb: &AwbArgs,
    alpha: f64,
) -> Result<()> {
    let (a, info) = load_artifact(trend)?;
    let cfg = awb_config(awb, a.series.len(), seed)?;
    let anchor = shapetests::locate_extremum(&a.fit, kind)?;
    let mut r = shapetests::linearity_test_at(&a.series, &a.fit, anchor, &cfg, alpha)?;
    let ave = std::mem::take(&mut r.bootstrap_ave);
    let sup = std::mem::take(&mut r.bootstrap_sup);
    out.csv(
        "lintest_bootstrap.csv",
        &["replicate", "q_ave", "q_sup"],
        ave.iter()
            .zip(&sup)
            .enumerate()
            .map(|(b, (x, y))| vec![b.to_string(), x.to_string(), y.to_string()])
            .collect(),
    )?;
    #[derive(Serialize)]
    struct Params {
        kind: ExtremumKind,
        alpha: f64,
        #[serde(flatten)]
        shape: ShapeParams,
    }
    #[derive(Serialize)]
    struct Results {
        anchor_date: String,
        end_date: String,
        #[serde(flatten)]
        test: shapetests::ShapeTestResult,
    }
    out.report(
        "lintest.json",
        "lintest",
        seed,
        &info,
        Params {
            kind,
            alpha,
            shape: ShapeParams {
                trend_bandwidth: a.fit.h,
                awb: (&cfg).into(),
            },
        },
        Results {
            anchor_date: date_str(a.series.date(r.test_set.0 - 1)),
            end_date: date_str(a.series.date(r.test_set.1 - 1)),
            test: r,
        },
    )
}

fn parse_interval(s: &ObservedSeries, raw: &str) -> Result<(usize, usize)> {
    let (from, to) = raw
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("bad interval {raw:?}; expected from:to dates")))?;
    let pos = |d: &str| -> Result<usize> {
        let date = series::parse_date(d.trim())?;
        s.position_of(date)
            .map(|i| i + 1)
            .ok_or_else(|| Error::invalid(format!("{d} lies outside the series")).into())
    };
    Ok((pos(from)?, pos(to)?))
}

#[allow(clippy::too_many_arguments)]
fn monotest(
    out: &mut Output,
    seed: u64,
    trend: &Path,
    interval: Option<&str>,
    h_u: Option<f64>,
    values: ValuesArg,
    awb: &AwbArgs,
    alpha: f64,
) -> Result<()> {
    let (a, info) = load_artifact(trend)?;
    let y = match values {
        ValuesArg::Deseasonalised => a.series.clone(),
        ValuesArg::Raw => {
            if a.seasonal.len() != a.series.len() {
                return Err(Error::LengthMismatch {
                    expected: a.series.len(),
                    actual: a.seasonal.len(),
                }
                .into());
            }
            let raw = a
                .series
                .values()
                .iter()
                .zip(&a.seasonal)
                .map(|(e, s)| e + s)
                .collect();
            a.series.with_values(raw)?
        }
    };
    let len = a.series.len();
    let cfg = awb_config(awb, len, seed)?;
    let span = match interval {
        Some(raw) => parse_interval(&a.series, raw)?,
        None => match shapetests::locate_extremum(&a.fit, ExtremumKind::Min) {
            Ok(t) => (t, len),
            Err(Error::NoInteriorExtremum(why)) => {
                warn!("{why}; testing the whole sample");
                (1, len)
            }
            Err(e) => return Err(e.into()),
        },
    };
    let mut r = shapetests::monotonicity_tests(&y, &a.fit, span, &cfg, h_u, alpha)?;
    let u1 = std::mem::take(&mut r.bootstrap_u1);
    let u2 = std::mem::take(&mut r.bootstrap_u2);
    out.csv(
        "monotest_bootstrap.csv",
        &["replicate", "u1", "u2"],
        u1.iter()
            .zip(&u2)
            .enumerate()
            .map(|(b, (x, y))| vec![b.to_string(), x.to_string(), y.to_string()])
            .collect(),
    )?;
    #[derive(Serialize)]
    struct Params<'a> {
        interval: Option<&'a str>,
        h_u: Option<f64>,
        values: ValuesArg,
        alpha: f64,
        #[serde(flatten)]
        shape: ShapeParams,
    }
    #[derive(Serialize)]
    struct Results {
        from_date: String,
        to_date: String,
        #[serde(flatten)]
        test: shapetests::MonotonicityResult,
    }
    out.report(
        "monotest.json",
        "monotest",
        seed,
        &info,
        Params {
            interval,
            h_u,
            values,
            alpha,
            shape: ShapeParams {
                trend_bandwidth: a.fit.h,
                awb: (&cfg).into(),
            },
        },
        Results {
            from_date: date_str(a.series.date(span.0 - 1)),
            to_date: date_str(a.series.date(span.1 - 1)),
            test: r,
        },
    )
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

#[allow(clippy::too_many_arguments)]
fn mc(
    out: &mut Output,
    seed: u64,
    panel: Panel,
    replications: usize,
    b: usize,
    scale: f64,
    sigma_eta: Option<f64>,
    fourier: usize,
) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("--scale must be positive, got {scale}")).into());
    }
    if replications == 0 || b == 0 {
        return Err(Error::invalid("--replications and --B must be positive").into());
    }
    let sigma = sigma_eta.unwrap_or(panel.default_sigma_eta());
    let reps = scaled(replications, scale);
    let boot = scaled(b, scale);
    let cells = mcharness::panel_cells(panel, sigma, fourier);
    for c in &cells {
        c.design.validate()?;
    }
    let start = Instant::now();
    let mut results = Vec::with_capacity(cells.len());
    let mut timing = Vec::with_capacity(cells.len());
    for (n, cell) in cells.iter().enumerate() {
        let t0 = Instant::now();
        let r = mcharness::run_cell(cell, reps, boot, seed);
        let secs = t0.elapsed().as_secs_f64();
        info!("cell {} ({}/{}) done in {secs:.1}s", cell.id, n + 1, cells.len());
        if let Some(f) = &r.first_failure {
            warn!("cell {}: {} failed replications, first: {f}", cell.id, r.failures);
        }
        timing.push((cell.id, secs));
        results.push(r);
    }
    let letter = format!("{panel:?}");
    let table = format!("mc_panel_{letter}.csv");
    let p = out.path(&table);
    let mut file = fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?;
    mcharness::write_table(&results, &mut file)?;
    file.flush()?;

    #[derive(Serialize)]
    struct Timing {
        total_seconds: f64,
        cells: Vec<CellTiming>,
    }
    #[derive(Serialize)]
    struct CellTiming {
        cell: u64,
        seconds: f64,
    }
    out.json(
        &format!("mc_panel_{letter}_timing.json"),
        &Timing {
            total_seconds: start.elapsed().as_secs_f64(),
            cells: timing
                .into_iter()
                .map(|(cell, seconds)| CellTiming { cell, seconds })
                .collect(),
        },
    )?;

    #[derive(Serialize)]
    struct Params {
        panel: Panel,
        replications: usize,
        bootstrap_replicates: usize,
        requested_replications: usize,
        requested_bootstrap_replicates: usize,
        scale: f64,
        sigma_eta: f64,
        fourier: usize,
        seeding: &'static str,
    }
    let none = InputInfo {
        path: String::new(),
        sha256: String::new(),
    };
    out.report(
        &format!("mc_panel_{letter}.json"),
        "mc",
        seed,
        &none,
        Params {
            panel,
            replications: reps,
            bootstrap_replicates: boot,
            requested_replications: replications,
            requested_bootstrap_replicates: b,
            scale,
            sigma_eta: sigma,
            fourier,
            seeding: "data stream derive_seed(seed, cell, replication); bootstrap stream derive_seed(seed, cell, replication, 1)",
        },
        results,
    )
}
