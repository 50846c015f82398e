//! Serializable check results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub observed: f64,
    pub pass: bool,
    pub samples: usize,
}

impl CheckResult {
    /// Passes iff `observed <= tolerance`.
    pub fn below(name: impl Into<String>, observed: f64, tolerance: f64, samples: usize) -> Self {
        CheckResult {
            name: name.into(),
            tolerance,
            observed,
            pass: observed <= tolerance,
            samples,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Parse {
            path: "report".into(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut r = CheckReport::default();
        r.push(CheckResult::below("db", 1e-13, 1e-12, 1000));
        r.push(CheckResult::below("fp", 2e-3, 1e-3, 4000));
        assert!(!r.all_pass());
        let back: CheckReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_json().unwrap().contains("\"observed\""));
    }

    #[test]
    fn nan_fails() {
        assert!(!CheckResult::below("x", f64::NAN, 1.0, 1).pass);
    }
}
