//! Run artifacts: `results.csv`, `summary.json`, `config.echo.json`.
//!
//! Floats are written with 17 significant digits so every value round-trips.
//! Missing values are empty cells.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::runs::{LocalLawRow, TrialRecord};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRIAL_HEADER: &str = "trial,n,p_hat,v,lambda,rigidity_ratio,que_statistic,status";
pub const LOCAL_LAW_HEADER: &str = "n,law,e,eta,window,in_domain,p95,median,max,count";

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn trial_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(TRIAL_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            r.n,
            fmt_opt(r.p_hat),
            fmt_opt(r.v),
            fmt_opt(r.lambda),
            fmt_opt(r.rigidity_ratio),
            fmt_opt(r.que_statistic),
            csv_text(&r.status)
        );
    }
    out
}

pub fn local_law_csv(rows: &[LocalLawRow]) -> String {
    let mut out = String::from(LOCAL_LAW_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.law,
            fmt_f64(r.e),
            fmt_f64(r.eta),
            r.window,
            r.in_domain,
            fmt_f64(r.p95),
            fmt_f64(r.median),
            fmt_f64(r.max),
            r.count
        );
    }
    out
}

/// `{"schema_version": 1, "command": .., "passed": .., "report": ..}`.
pub fn summary_json<R: Serialize>(command: &str, passed: bool, report: &R) -> Result<String> {
    let report = serde_json::to_value(report).map_err(|e| Error::Io(e.to_string()))?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "passed": passed,
        "report": report,
    });
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

pub fn config_echo_json<C: Serialize>(config: &C) -> Result<String> {
    let cfg = serde_json::to_value(config).map_err(|e| Error::Io(e.to_string()))?;
    let v = json!({ "schema_version": SCHEMA_VERSION, "config": cfg });
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Checks that a parsed JSON artifact carries the expected schema version.
pub fn check_schema(v: &Value) -> Result<()> {
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(s) if s == SCHEMA_VERSION as u64 => Ok(()),
        Some(s) => Err(Error::Config(format!("schema_version {s} is not supported (expected {SCHEMA_VERSION})"))),
        None => Err(Error::Config("artifact has no schema_version".into())),
    }
}
