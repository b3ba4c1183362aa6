//! Command-line front end. Each subcommand reads its inputs, calls the
//! library and writes a JSON report plus CSV/SVG plot data under `--out`.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure,
//! 1 anything else (I/O while writing outputs).

mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::shapetests::ExtremumKind;
use crate::Error;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "TRENDINFER_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "trendinfer",
    version,
    about = "Bootstrap trend inference for gappy time series"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed for every bootstrap and simulation stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "trendinfer-out")]
    pub out: PathBuf,
    /// Flat `key = value` file; keys are flag names, flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// CSV with a date column and a value column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_column: String,
    #[arg(long, default_value = "value")]
    pub value_column: String,
}

#[derive(Debug, Args, Clone)]
pub struct AwbArgs {
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = crate::awb::DEFAULT_REPLICATES)]
    pub b: usize,
    #[arg(long, default_value_t = crate::awb::DEFAULT_THETA)]
    pub theta: f64,
    /// Multiplier autocorrelation; defaults to theta^(1/l).
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Min,
    Max,
}

impl From<KindArg> for ExtremumKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Min => ExtremumKind::Min,
            KindArg::Max => ExtremumKind::Max,
        }
    }
}

/// Values the monotonicity statistics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValuesArg {
    Deseasonalised,
    Raw,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the daily grid and write the canonical series CSV.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Broken linear trend: break estimate, sup-F test and intervals.
    Break {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = crate::breaktrend::DEFAULT_LAMBDA)]
        lambda: f64,
        /// Fourier harmonics in the seasonal component.
        #[arg(long, default_value_t = crate::seasonal::DEFAULT_HARMONICS)]
        fourier: usize,
        #[command(flatten)]
        awb: AwbArgs,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Kernel trend with pointwise and simultaneous bands.
    Smooth {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = crate::seasonal::DEFAULT_HARMONICS)]
        fourier: usize,
        /// Bandwidth in rescaled time.
        #[arg(long, conflicts_with = "pick_minimum")]
        bandwidth: Option<f64>,
        /// Use the n-th interior local minimum of the MCV curve.
        #[arg(long)]
        pick_minimum: Option<usize>,
        /// Cross-validation grid `lo:hi:step`.
        #[arg(long, default_value = "0.01:0.25:0.005")]
        mcv_grid: String,
        /// Leave-out half-width; defaults to ceil(1.75 T^(1/3)).
        #[arg(long)]
        mcv_k: Option<usize>,
        #[command(flatten)]
        awb: AwbArgs,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Location of the trend extremum with a bootstrap interval.
    Extremum {
        /// Trend artifact written by `smooth`.
        #[arg(long)]
        trend: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Min)]
        kind: KindArg,
        #[command(flatten)]
        awb: AwbArgs,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Linearity of the trend after its extremum.
    Lintest {
        #[arg(long)]
        trend: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Min)]
        kind: KindArg,
        #[command(flatten)]
        awb: AwbArgs,
        #[arg(long, default_value_t = crate::shapetests::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Monotonicity tests on an interval of the trend.
    Monotest {
        #[arg(long)]
        trend: PathBuf,
        /// Calendar dates `from:to`; defaults to the minimum through the end.
        #[arg(long)]
        interval: Option<String>,
        /// Overrides 0.5 T^(-1/5).
        #[arg(long)]
        h_u: Option<f64>,
        #[arg(long, value_enum, default_value_t = ValuesArg::Deseasonalised)]
        values: ValuesArg,
        #[command(flatten)]
        awb: AwbArgs,
        #[arg(long, default_value_t = crate::shapetests::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Monte Carlo panel.
    Mc {
        #[arg(long)]
        panel: crate::mcharness::Panel,
        #[arg(long, default_value_t = 1000)]
        replications: usize,
        #[arg(long = "B", default_value_t = crate::awb::DEFAULT_REPLICATES)]
        b: usize,
        /// Multiplies replications and B.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Noise scale; defaults to the panel's calibrated value.
        #[arg(long)]
        sigma_eta: Option<f64>,
        /// Harmonics fitted by the break procedures.
        #[arg(long, default_value_t = 0)]
        fourier: usize,
    },
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_numerical() => 3,
        Some(_) => 2,
        None => 1,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::merge(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.global.threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1").into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| commands::dispatch(&cli))),
        None => commands::dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
