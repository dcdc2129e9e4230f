use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input_sha256: String,
    pub checks: Vec<Check>,
    pub elapsed_ms: u64,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Recorder {
    command: String,
    input_sha256: String,
    checks: Vec<Check>,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, input: &[u8]) -> Self {
        Self {
            command: command.to_string(),
            input_sha256: digest(input),
            checks: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Records `value <= tol` as pass.
    pub fn bound(&mut self, name: &str, value: f64, tol: f64) {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        self.push(name, status, Some(value), Some(tol));
    }

    pub fn push(&mut self, name: &str, status: Status, value: Option<f64>, tol: Option<f64>) {
        assert!(
            self.checks.iter().all(|c| c.name != name),
            "check `{name}` recorded twice"
        );
        self.checks.push(Check {
            name: name.to_string(),
            status,
            value,
            tol,
        });
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn finish(self) -> RunReport {
        RunReport {
            command: self.command,
            input_sha256: self.input_sha256,
            checks: self.checks,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        }
    }
}

impl RunReport {
    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skip => "skip",
            };
            let value = c.value.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let tol = c.tol.map_or(String::new(), |t| format!("  (tol {t:e})"));
            let _ = writeln!(out, "{:<20} {status}  {value}{tol}", c.name);
        }
        out
    }
}
