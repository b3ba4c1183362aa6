//! Helpers for driving the binary end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_trendinfer"));
    c.env_remove("TRENDINFER_OUT").env("RUST_LOG", "error");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

/// Three years of daily data with gaps, an annual cycle and `shape(τ)` as
/// the trend.
pub fn write_input(dir: &Path, shape: impl Fn(f64) -> f64) -> PathBuf {
    let start = chrono::NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let mut csv = String::from("date,value\n");
    let len = 3 * 365;
    for i in 0..len {
        if i > 0 && (i * 7) % 10 < 3 {
            continue;
        }
        let tau = i as f64 / len as f64;
        let season = 0.3 * (std::f64::consts::TAU * i as f64 / 365.25).cos();
        let noise = 0.15 * ((i as f64 * 12.9898).sin() * 43758.5453).fract();
        let date = start + chrono::Duration::days(i as i64);
        csv.push_str(&format!(
            "{},{:.6}\n",
            date.format("%Y-%m-%d"),
            shape(tau) + season + noise
        ));
    }
    let p = dir.join("input.csv");
    fs::write(&p, csv).unwrap();
    p
}

pub fn valley(tau: f64) -> f64 {
    5.0 + 4.0 * (tau - 0.4).powi(2)
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with("_timing.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

pub fn report(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join(name)).unwrap()).unwrap()
}

/// Runs every subcommand into `out`; fails on the first nonzero exit.
pub fn pipeline(input: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let out_s = out.to_str().unwrap();
    let input_s = input.to_str().unwrap();
    let trend = out.join("trend_fit.json");
    let trend_s = trend.to_str().unwrap();
    let common = ["--seed", "42", "--threads", threads, "--out", out_s];
    let steps: Vec<Vec<&str>> = vec![
        vec!["ingest", "--input", input_s],
        vec!["break", "--input", input_s, "--B", "49"],
        vec!["smooth", "--input", input_s, "--bandwidth", "0.1", "--B", "49"],
        vec!["extremum", "--trend", trend_s, "--B", "49"],
        vec!["lintest", "--trend", trend_s, "--B", "49"],
        vec!["monotest", "--trend", trend_s, "--B", "49"],
        vec!["mc", "--panel", "D", "--replications", "2", "--B", "9"],
    ];
    for step in steps {
        let o = run(&[step.as_slice(), &common].concat());
        if code(&o) != 0 {
            return Err(format!("{step:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}
