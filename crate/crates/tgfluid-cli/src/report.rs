//! `report.json` and `timing.json`. The report is a function of the config
//! alone, so repeated runs produce identical bytes; wall time goes to the
//! separate timing file.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, Kind};

#[derive(Serialize)]
struct Report<'a> {
    kind: Kind,
    code_version: &'static str,
    config_hash: String,
    passed: bool,
    config: &'a ExperimentConfig,
    results: &'a Value,
}

#[derive(Serialize)]
struct Timing {
    kind: Kind,
    wall_time_s: f64,
    threads: usize,
}

pub fn write(out: &Path, kind: Kind, cfg: &ExperimentConfig, passed: bool, results: &Value) -> Result<()> {
    let report = Report {
        kind,
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        passed,
        config: cfg,
        results,
    };
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_timing(out: &Path, kind: Kind, wall_time_s: f64, threads: usize) -> Result<()> {
    let path = out.join("timing.json");
    let text = serde_json::to_string_pretty(&Timing { kind, wall_time_s, threads })?;
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
