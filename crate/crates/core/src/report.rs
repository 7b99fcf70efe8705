//! Structured results of bound audits.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Search-based value without a pass/fail meaning.
    Estimate,
}

/// One audited inequality: the measured side, the bound side, and the
/// signed distance between them (`margin >= 0` means the inequality holds).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub kind: String,
    pub parameters: BTreeMap<String, Value>,
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub provenance: String,
}

impl AuditReport {
    /// Upper-bound audit: passes iff `measured <= bound + tol`.
    pub fn upper(kind: impl Into<String>, measured: f64, bound: f64, tol: f64) -> Self {
        let margin = bound - measured;
        Self::with_margin(kind, measured, bound, margin, margin >= -tol)
    }

    /// Lower-bound audit: passes iff `measured >= bound - tol`.
    pub fn lower(kind: impl Into<String>, measured: f64, bound: f64, tol: f64) -> Self {
        let margin = measured - bound;
        Self::with_margin(kind, measured, bound, margin, margin >= -tol)
    }

    pub fn estimate(kind: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            kind: kind.into(),
            parameters: BTreeMap::new(),
            measured,
            bound,
            margin: bound - measured,
            verdict: Verdict::Estimate,
            provenance: String::new(),
        }
    }

    fn with_margin(kind: impl Into<String>, measured: f64, bound: f64, margin: f64, ok: bool) -> Self {
        Self {
            kind: kind.into(),
            parameters: BTreeMap::new(),
            measured,
            bound,
            margin,
            // NaN margins never pass.
            verdict: if ok && !margin.is_nan() { Verdict::Pass } else { Verdict::Fail },
            provenance: String::new(),
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    pub fn provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Estimate => "EST ",
        };
        write!(
            f,
            "[{verdict}] {:<10} measured={:<14.8} bound={:<14.8} margin={:.3e}",
            self.kind, self.measured, self.bound, self.margin
        )?;
        for (k, v) in &self.parameters {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}
