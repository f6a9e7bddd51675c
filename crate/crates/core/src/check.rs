//! Pass/fail records for structural and property checks.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub description: String,
    /// Seed that regenerates the failing case, when the check is randomized.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub checked: usize,
    pub violations: Vec<Violation>,
    /// Soft checks report a violation rate but never fail a run.
    pub soft: bool,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checked: 0, violations: Vec::new(), soft: false }
    }

    pub fn soft(name: impl Into<String>) -> Self {
        Self { soft: true, ..Self::new(name) }
    }

    pub fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations.push(Violation { description: describe(), seed: None });
        }
    }

    pub fn record_seeded(&mut self, ok: bool, seed: u64, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations.push(Violation { description: describe(), seed: Some(seed) });
        }
    }

    pub fn passed(&self) -> bool {
        self.soft || self.violations.is_empty()
    }

    pub fn violation_rate(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations.len() as f64 / self.checked as f64
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.soft, self.violations.is_empty()) {
            (_, true) => "PASS",
            (true, false) => "SOFT",
            (false, false) => "FAIL",
        };
        write!(
            f,
            "[{status}] {}: {} checked, {} violations ({:.3}%)",
            self.name,
            self.checked,
            self.violations.len(),
            100.0 * self.violation_rate()
        )?;
        if let Some(v) = self.violations.first() {
            write!(f, "; first: {}", v.description)?;
            if let Some(seed) = v.seed {
                write!(f, " (replay seed {seed})")?;
            }
        }
        Ok(())
    }
}
