//! Report files. The JSON body is byte-stable for a fixed configuration; the wall-clock
//! timestamp sits alone on the second line so it can be stripped before comparing runs.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sasaki_core::verify::{FitResult, GateReport, InequalityReport};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    /// Instances whose numbers could not be produced.
    pub errors: usize,
}

impl Summary {
    pub fn of(reports: &[InequalityReport]) -> Self {
        let errors = reports.iter().filter(|r| r.is_failure()).count();
        let passed = reports.iter().filter(|r| r.pass).count();
        Self { total: reports.len(), passed, failed: reports.len() - passed - errors, errors }
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport<'a> {
    pub schema_version: u32,
    pub suite: &'a str,
    pub config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<&'a GateReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
    pub summary: Summary,
    pub reports: Vec<InequalityReport>,
}

pub fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Pretty JSON with `"timestamp_unix"` inserted as the first member, on a line of its own.
pub fn to_json_with_timestamp<T: Serialize>(value: &T, ts: u64) -> Result<String, CliError> {
    let body = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    let rest = body.strip_prefix("{\n").ok_or_else(|| CliError::Io("report is not a JSON object".into()))?;
    Ok(format!("{{\n  \"timestamp_unix\": {ts},\n{rest}\n"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// One row per instance: name, verdict, sides, margin, tolerance and the inputs as compact JSON.
pub fn summary_csv(reports: &[InequalityReport]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["index", "name", "pass", "lhs", "rhs", "margin", "tol", "inputs"]).map_err(io)?;
    for (i, r) in reports.iter().enumerate() {
        let inputs = serde_json::to_string(&r.inputs).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record([
            i.to_string(),
            r.name.clone(),
            r.pass.to_string(),
            crate::commands::num(r.lhs),
            crate::commands::num(r.rhs),
            crate::commands::num(r.margin),
            crate::commands::num(r.tol),
            inputs,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Writes `<out_dir>/<stem>.json` and `<out_dir>/<stem>.csv`; returns the JSON path.
pub fn write_suite(out_dir: &Path, stem: &str, report: &SuiteReport) -> Result<PathBuf, CliError> {
    let json = to_json_with_timestamp(report, timestamp())?;
    let json_path = out_dir.join(format!("{stem}.json"));
    write_file(&json_path, &json)?;
    write_file(&out_dir.join(format!("{stem}.csv")), &summary_csv(&report.reports)?)?;
    Ok(json_path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, &to_json_with_timestamp(value, timestamp())?)
}

/// Writes CSV text to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_is_second_line() {
        #[derive(Serialize)]
        struct S {
            a: u32,
        }
        let s = to_json_with_timestamp(&S { a: 1 }, 42).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "  \"timestamp_unix\": 42,");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"], 1);
    }

    #[test]
    fn csv_quotes_inputs() {
        let r = InequalityReport::new("x", 1.0, 2.0, 0.0).input("y", vec![1.0, 2.0]);
        let s = summary_csv(&[r]).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "0,x,true,1.0,2.0,1.0,0.0,\"{\"\"y\"\":[1.0,2.0]}\"");
    }
}
