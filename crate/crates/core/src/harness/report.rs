//! Report rows and rendering.
//!
//! Every row carries the provenance of its target (an oracle operation or an
//! exact constant) and one of three decision rules: a z-score against a
//! threshold, an exact deviation against a tolerance, or a p-value against a
//! floor. `report.csv` is rendered deterministically — identical
//! configuration and seed reproduce it byte for byte — while `report.json`
//! additionally echoes the configuration and the (non-deterministic)
//! runtime.

use serde::{Deserialize, Serialize};

/// Relative resolution floor applied to standard errors in z rows, so that
/// deterministic estimators (zero variance) compare at float resolution
/// instead of dividing by zero.
pub const SE_FLOOR_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// `statistic` is a z-score; passes iff `|z| <= threshold`.
    Z,
    /// `statistic` is an absolute deviation; passes iff `deviation <= target`.
    Exact,
    /// `statistic` is a p-value; passes iff `p >= target`.
    PValue,
}

/// One verification row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub kind: RowKind,
    pub estimate: f64,
    /// Standard error for z rows; `None` otherwise.
    pub stderr: Option<f64>,
    /// Comparison value: the target for z rows, the tolerance for exact
    /// rows, the p-value floor for p rows.
    pub target: f64,
    /// The decisive statistic (z-score, deviation, or p-value).
    pub statistic: f64,
    pub pass: bool,
    /// Where the target comes from (oracle operation or exact constant).
    pub target_source: String,
}

impl ReportRow {
    /// A z row comparing a Monte Carlo estimate to a fixed target.
    pub fn z_row(
        name: impl Into<String>,
        estimate: f64,
        stderr: f64,
        target: f64,
        threshold: f64,
        target_source: impl Into<String>,
    ) -> ReportRow {
        let se = stderr.max(SE_FLOOR_REL * target.abs().max(1.0));
        let z = (estimate - target) / se;
        ReportRow {
            name: name.into(),
            kind: RowKind::Z,
            estimate,
            stderr: Some(stderr),
            target,
            statistic: z,
            pass: z.abs() <= threshold && z.is_finite(),
            target_source: target_source.into(),
        }
    }

    /// A z row comparing two Monte Carlo estimates of the same quantity.
    pub fn two_sample_z_row(
        name: impl Into<String>,
        estimate: f64,
        stderr_a: f64,
        other: f64,
        stderr_b: f64,
        threshold: f64,
        target_source: impl Into<String>,
    ) -> ReportRow {
        let se = stderr_a.hypot(stderr_b).max(SE_FLOOR_REL * other.abs().max(1.0));
        let z = (estimate - other) / se;
        ReportRow {
            name: name.into(),
            kind: RowKind::Z,
            estimate,
            stderr: Some(stderr_a),
            target: other,
            statistic: z,
            pass: z.abs() <= threshold && z.is_finite(),
            target_source: target_source.into(),
        }
    }

    /// An exact row: a deviation that must stay within a tolerance.
    pub fn exact_row(
        name: impl Into<String>,
        deviation: f64,
        tolerance: f64,
        target_source: impl Into<String>,
    ) -> ReportRow {
        ReportRow {
            name: name.into(),
            kind: RowKind::Exact,
            estimate: deviation,
            stderr: None,
            target: tolerance,
            statistic: deviation,
            pass: deviation <= tolerance && deviation.is_finite(),
            target_source: target_source.into(),
        }
    }

    /// A p-value row: passes iff the p-value stays above the floor.
    pub fn p_row(
        name: impl Into<String>,
        p_value: f64,
        floor: f64,
        target_source: impl Into<String>,
    ) -> ReportRow {
        ReportRow {
            name: name.into(),
            kind: RowKind::PValue,
            estimate: p_value,
            stderr: None,
            target: floor,
            statistic: p_value,
            pass: p_value >= floor,
            target_source: target_source.into(),
        }
    }

    fn csv_line(&self) -> String {
        let stderr = match self.stderr {
            Some(se) => format!("{se}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{}",
            self.name, self.estimate, stderr, self.target, self.statistic, self.pass
        )
    }

    /// One human-readable line per row.
    pub fn display_line(&self) -> String {
        let verdict = if self.pass { "pass" } else { "FAIL" };
        match self.kind {
            RowKind::Z => format!(
                "{verdict}  {:<58} est {:.6e}  target {:.6e}  z {:+.3}",
                self.name, self.estimate, self.target, self.statistic
            ),
            RowKind::Exact => format!(
                "{verdict}  {:<58} deviation {:.3e}  tol {:.1e}",
                self.name, self.statistic, self.target
            ),
            RowKind::PValue => format!(
                "{verdict}  {:<58} p {:.4}  floor {}",
                self.name, self.statistic, self.target
            ),
        }
    }
}

/// A full experiment report: configuration echo plus rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub suite: String,
    pub seed: u64,
    pub threshold: f64,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    /// Wall-clock runtime; echoed in JSON only, never in the CSV.
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Deterministic CSV: one row per test, no runtime, no extra columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,estimate,stderr,target,z,pass\n");
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_rules() {
        let z = ReportRow::z_row("m", 1.01, 0.01, 1.0, 4.0, "analytic:1");
        assert!(z.pass && (z.statistic - 1.0).abs() <= 1e-9);
        let z_bad = ReportRow::z_row("m", 1.5, 0.01, 1.0, 4.0, "analytic:1");
        assert!(!z_bad.pass);
        // Deterministic estimator: the floor keeps tiny accumulation noise
        // from dividing by zero.
        let det = ReportRow::z_row("d", 1.0 + 1e-14, 0.0, 1.0, 4.0, "exact");
        assert!(det.pass);
        let ex = ReportRow::exact_row("e", 5e-10, 1e-9, "exact");
        assert!(ex.pass);
        assert!(!ReportRow::exact_row("e", 2e-9, 1e-9, "exact").pass);
        assert!(ReportRow::p_row("p", 0.3, 0.001, "chi-square").pass);
        assert!(!ReportRow::p_row("p", 0.0001, 0.001, "chi-square").pass);
    }

    #[test]
    fn csv_is_deterministic() {
        let report = ExperimentReport {
            suite: "demo".into(),
            seed: 7,
            threshold: 4.0,
            config: serde_json::json!({"replicates": 10}),
            rows: vec![
                ReportRow::z_row("a", 1.0, 0.1, 1.0, 4.0, "analytic:1"),
                ReportRow::exact_row("b", 0.0, 1e-9, "exact"),
            ],
            runtime_seconds: 1.23,
        };
        let csv = report.to_csv();
        assert_eq!(csv, report.to_csv());
        assert!(csv.starts_with("name,estimate,stderr,target,z,pass\n"));
        assert!(!csv.contains("1.23"), "runtime must not leak into the CSV");
        let json = report.to_json();
        assert!(json.contains("runtime_seconds"));
    }
}
