//! Flat `key = value` config files. Keys are long flag names; values from
//! the file are spliced into argv only where the flag was not given.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use super::{Cli, OUT_ENV};
use crate::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(Error::invalid(format!("config line {}: empty key", n + 1)));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn given(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&prefix)
    })
}

fn longs(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long())
        .map(str::to_string)
        .collect()
}

/// Returns `args` with the config file's entries appended as flags.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let entries = parse(&text)?;

    let cmd = Cli::command();
    let global = longs(&cmd);
    let sub = args
        .iter()
        .skip(1)
        .find_map(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()))
        .map(longs)
        .unwrap_or_default();
    let any_sub: BTreeSet<String> = cmd.get_subcommands().flat_map(longs).collect();

    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" {
            return Err(Error::invalid("config files cannot include other config files"));
        }
        if !global.contains(&key) && !sub.contains(&key) {
            if any_sub.contains(&key) {
                // Belongs to another subcommand; shared config files are fine.
                continue;
            }
            return Err(Error::invalid(format!("unknown config key {key:?}")));
        }
        if given(&args, &key) || (key == "out" && std::env::var_os(OUT_ENV).is_some()) {
            continue;
        }
        out.push(format!("--{key}={value}").into());
    }
    Ok(out)
}
