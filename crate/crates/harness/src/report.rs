//! Run reports and the tables derived from them.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("the report carries no convergence series")]
    MissingSeries,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// How a residual is compared with its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Comparison {
    pub fn holds(self, residual: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AtMost => residual <= tolerance,
            Comparison::AtLeast => residual >= tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        }
    }
}

/// One named check. Hard checks decide the exit status; soft checks only do
/// so under `--strict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub hard: bool,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl CheckResult {
    pub fn measured(name: &str, hard: bool, residual: f64, comparison: Comparison, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            hard,
            passed: comparison.holds(residual, tolerance),
            residual,
            tolerance,
            comparison,
            detail,
            elapsed_ms: 0,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: &str, hard: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            hard,
            passed: false,
            residual: f64::NAN,
            tolerance: f64::NAN,
            comparison: Comparison::AtMost,
            detail,
            elapsed_ms: 0,
        }
    }

    /// Overrides the pass decision when it is not a single comparison.
    pub fn with_passed(mut self, passed: bool) -> Self {
        self.passed = passed;
        self
    }
}

/// One row of a plot-ready convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub depth: usize,
    pub quantity: String,
    pub residual: f64,
    /// Reference envelope, when there is one.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub version: String,
    /// How random streams derive from the seed.
    pub rng: String,
}

impl Default for Artifact {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: "ChaCha8Rng::seed_from_u64(seed) with set_stream(j) for trajectory j: one uniform f64 for the label, \
                  then one per outcome. Check-internal randomness uses streams 2^63 + k."
                .to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact: Artifact,
    pub command: String,
    pub seed: u64,
    pub strict: bool,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    /// Free-form per-experiment summary statistics.
    pub summary: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Vec<ConvergenceRow>>,
    pub elapsed_ms: u128,
}

impl RunReport {
    /// A check counts as failed when it is hard (or `strict`) and did not pass.
    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed && (c.hard || self.strict)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// `name,hard,passed,residual,comparison,tolerance` per check.
    pub fn summary_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "hard", "passed", "residual", "comparison", "tolerance"])?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                c.hard.to_string(),
                c.passed.to_string(),
                format_float(c.residual),
                c.comparison.symbol().to_string(),
                format_float(c.tolerance),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is UTF-8"))
    }
}

fn format_float(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

/// Header comment of the convergence table.
pub const CONVERGENCE_HEADER: &str = "# depth: window length or horizon; quantity: series name; \
residual: measured value at that depth; bound: reference envelope (empty when none)";

/// Renders the convergence series as CSV, sorted by depth (stable within a
/// depth). An empty series yields the header only.
pub fn emit_convergence_table(report: &RunReport) -> Result<String, ReportError> {
    let series = report.convergence.as_ref().ok_or(ReportError::MissingSeries)?;
    let mut rows: Vec<&ConvergenceRow> = series.iter().collect();
    rows.sort_by_key(|r| r.depth);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["depth", "quantity", "residual", "bound"])?;
    for r in rows {
        w.write_record([
            r.depth.to_string(),
            r.quantity.clone(),
            format!("{:e}", r.residual),
            r.bound.map(|b| format!("{b:e}")).unwrap_or_default(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv output is UTF-8");
    Ok(format!("{CONVERGENCE_HEADER}\n{body}"))
}
