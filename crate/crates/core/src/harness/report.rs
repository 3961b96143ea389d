//! Bench reports: per-class tallies, per-trial CSV, JSON summary and the
//! stdout table.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::binsim::PoseClass;

use super::config::ExperimentConfig;
use super::HarnessError;

pub const CSV_HEADER: &str = "trial,class,phase,success,cause,geodesic_error_deg";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassTally {
    pub class: String,
    pub attempted: usize,
    pub succeeded: usize,
    pub rate: f64,
}

impl ClassTally {
    fn new(class: &str, attempted: usize, succeeded: usize) -> Self {
        let rate = if attempted == 0 { 0.0 } else { succeeded as f64 / attempted as f64 };
        Self {
            class: class.to_string(),
            attempted,
            succeeded,
            rate,
        }
    }
}

/// One CSV line. Place-bench trials that reach the placement produce a
/// `pick` row followed by a `place` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub class: PoseClass,
    pub phase: String,
    pub success: bool,
    pub cause: String,
    /// Final orientation error of a placement, degrees.
    pub geodesic_error_deg: Option<f64>,
    /// Error of the pose estimate behind a placement, degrees.
    pub estimation_error_deg: Option<f64>,
}

impl TrialRow {
    fn csv(&self) -> String {
        let err = self.geodesic_error_deg.map(|e| format!("{e:.9}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.trial, self.class, self.phase, self.success, self.cause, err
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tolerance_deg: f64,
    pub succeeded: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub bench: String,
    pub seed: u64,
    /// Breast Up, Breast Down, Breast Side.
    pub columns: Vec<ClassTally>,
    pub total: ClassTally,
    pub trials: Vec<TrialRow>,
    /// Pose-estimate error over placed trials, degrees.
    pub estimation_error_deg: Option<ErrorStats>,
    /// Placement successes over all trials at each tolerance.
    pub sweep: Vec<SweepPoint>,
    pub codebook: Option<String>,
    pub config: ExperimentConfig,
    /// Wall-clock seconds; left out of the JSON so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    /// Tallies from one `(class, success)` outcome per trial.
    pub fn new(bench: &str, config: &ExperimentConfig, outcomes: &[(PoseClass, bool)], trials: Vec<TrialRow>) -> Self {
        let columns: Vec<ClassTally> = PoseClass::ALL
            .iter()
            .map(|c| {
                let a = outcomes.iter().filter(|(k, _)| k == c).count();
                let s = outcomes.iter().filter(|(k, ok)| k == c && *ok).count();
                ClassTally::new(c.title(), a, s)
            })
            .collect();
        let total = ClassTally::new(
            "Total",
            columns.iter().map(|c| c.attempted).sum(),
            columns.iter().map(|c| c.succeeded).sum(),
        );
        Self {
            bench: bench.to_string(),
            seed: config.experiment.seed,
            columns,
            total,
            trials,
            estimation_error_deg: None,
            sweep: Vec::new(),
            codebook: None,
            config: config.clone(),
            runtime_seconds: 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.trials {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Attempted / Succeeded / Success Rate over the three classes and the
    /// total, with reference rates printed underneath when given.
    pub fn table(&self, title: &str, reference: Option<[u32; 4]>) -> String {
        let cols: Vec<&ClassTally> = self.columns.iter().chain(std::iter::once(&self.total)).collect();
        let mut s = format!("{title} (seed {})\n", self.seed);
        let _ = write!(s, "{:<14}", "Pose");
        for c in &cols {
            let _ = write!(s, "{:>13}", c.class);
        }
        s.push('\n');
        let mut row = |name: &str, cell: &dyn Fn(&ClassTally) -> String| {
            let _ = write!(s, "{name:<14}");
            for c in &cols {
                let _ = write!(s, "{:>13}", cell(c));
            }
            s.push('\n');
        };
        row("Attempted", &|c| c.attempted.to_string());
        row("Succeeded", &|c| c.succeeded.to_string());
        row("Success Rate", &|c| format!("{:.0}%", 100.0 * c.rate));
        if let Some(r) = reference {
            let _ = write!(s, "{:<14}", "Reference");
            for v in r {
                let _ = write!(s, "{:>13}", format!("{v}%"));
            }
            s.push('\n');
        }
        if let Some(e) = &self.estimation_error_deg {
            let _ = writeln!(
                s,
                "Estimate error over {} placements: mean {:.2} deg, median {:.2} deg, max {:.2} deg",
                e.count, e.mean, e.median, e.max
            );
        }
        if !self.sweep.is_empty() {
            s.push_str("Tolerance sweep:");
            for p in &self.sweep {
                let _ = write!(s, " {}deg {:.0}%", p.tolerance_deg, 100.0 * p.rate);
            }
            s.push('\n');
        }
        s
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), HarnessError> {
        write_file(&dir.join(format!("{stem}.csv")), &self.to_csv())?;
        write_file(&dir.join(format!("{stem}.json")), &self.to_json())
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(trial: usize, class: PoseClass, success: bool) -> TrialRow {
        TrialRow {
            trial,
            class,
            phase: "pick".into(),
            success,
            cause: if success { "none" } else { "slipped" }.into(),
            geodesic_error_deg: None,
            estimation_error_deg: None,
        }
    }

    #[test]
    fn totals_are_sums_and_rates_exact() {
        let outcomes = [
            (PoseClass::BreastUp, true),
            (PoseClass::BreastUp, false),
            (PoseClass::BreastUp, true),
            (PoseClass::BreastDown, true),
            (PoseClass::BreastSide, false),
        ];
        let rows = outcomes.iter().enumerate().map(|(i, (c, ok))| row(i, *c, *ok)).collect();
        let r = ExperimentReport::new("pick", &ExperimentConfig::default(), &outcomes, rows);
        assert_eq!(r.columns[0].attempted, 3);
        assert_eq!(r.columns[0].rate, 2.0 / 3.0);
        assert_eq!(r.total.attempted, 5);
        assert_eq!(r.total.succeeded, 3);
        assert_eq!(r.total.rate, 0.6);
        let csv = r.to_csv();
        assert!(csv.starts_with("trial,class,phase,success,cause,geodesic_error_deg\n0,breast-up,pick,true,none,\n"));
        assert_eq!(csv.lines().count(), 6);
        let t = r.table("Pick bench", Some([92, 88, 76, 85]));
        assert!(t.contains("Breast Side"));
        assert!(t.contains("Success Rate"));
    }

    #[test]
    fn error_stats_median_even_and_odd() {
        assert_eq!(ErrorStats::from_values(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert_eq!(ErrorStats::from_values(&[4.0, 1.0, 2.0, 3.0]).unwrap().median, 2.5);
        assert!(ErrorStats::from_values(&[]).is_none());
    }
}
