//! Report and CSV emission.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::{RunConfig, ToleranceEntry};
use crate::error::CliError;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), pass: value <= tolerance, value: Some(value), tolerance: Some(tolerance), detail: None }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), pass: value >= tolerance, value: Some(value), tolerance: Some(tolerance), detail: None }
    }

    pub fn flag(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, value: None, tolerance: None, detail: Some(detail.into()) }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

/// Wall-clock stage timer.
pub struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<(String, f64)>,
}

impl Clock {
    pub fn start() -> Self {
        let now = Instant::now();
        Clock { start: now, last: now, stages: Vec::new() }
    }

    pub fn stage(&mut self, name: impl Into<String>) {
        let now = Instant::now();
        self.stages.push((name.into(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn finish(self) -> Timings {
        Timings { total_seconds: self.start.elapsed().as_secs_f64(), stages: self.stages }
    }
}

/// Machine-readable outcome of one run. Everything except `timings` is a
/// function of the config and seed.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub inputs: serde_json::Value,
    pub tolerances: Vec<ToleranceEntry>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig, checks: Vec<Check>, results: serde_json::Value, timings: Timings) -> Self {
        Report {
            schema_version: REPORT_SCHEMA,
            command: command.to_string(),
            seed: config.seed,
            inputs: config.echo(),
            tolerances: config.tolerances.entries(),
            pass: checks.iter().all(|c| c.pass),
            checks,
            results,
            timings: config.timings().then_some(timings),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.to_json();
        match path {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// `log₂(a/b)`, the observed order between consecutive halvings of `h`.
pub fn order(prev: f64, next: f64, n_prev: usize, n_next: usize) -> Option<f64> {
    (prev > 0.0 && next > 0.0 && n_next != n_prev).then(|| (prev / next).ln() / (n_next as f64 / n_prev as f64).ln())
}

/// Writes a CSV table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6e}"))
}
