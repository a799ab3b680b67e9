use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{fit_loglog_slope, median, Experiment, LogLogFit, SweepConfig};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RunStatus {
    Ok,
    Diverged { last_good_time: f64 },
}

/// One measured value of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawRecord {
    pub quantity: String,
    pub m: usize,
    pub seed: u64,
    pub value: f64,
    pub status: RunStatus,
}

/// Slope of the seed-median of a quantity against width.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub quantity: String,
    pub points: Vec<(usize, f64)>,
    pub fit: Option<LogLogFit>,
    /// Why `fit` is missing.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: String,
}

impl Check {
    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            passed: measured >= lo && measured <= hi,
            measured,
            expected: format!("[{lo}, {hi}]"),
        }
    }
}

/// Raw values, fits, verdicts and the config that produced them.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub experiment: Experiment,
    pub config: SweepConfig,
    pub raw: Vec<RawRecord>,
    pub fits: Vec<SlopeFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ScalingReport {
    pub fn new(experiment: Experiment, config: SweepConfig) -> Self {
        ScalingReport { experiment, config, raw: Vec::new(), fits: Vec::new(), checks: Vec::new(), notes: Vec::new() }
    }

    /// True when every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, quantity: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }

    /// Successful values of `quantity` at width `m`, in seed order.
    pub fn values(&self, quantity: &str, m: usize) -> Vec<f64> {
        self.raw
            .iter()
            .filter(|r| r.quantity == quantity && r.m == m && r.status == RunStatus::Ok)
            .map(|r| r.value)
            .collect()
    }

    /// `(m, seed-median)` for every width with at least one successful run.
    pub fn medians(&self, quantity: &str) -> Vec<(usize, f64)> {
        self.config.widths.iter().filter_map(|&m| median(&self.values(quantity, m)).map(|v| (m, v))).collect()
    }

    /// Fits the seed-medians of `quantity` and stores the result.
    pub fn fit_quantity(&mut self, quantity: &str) -> SlopeFit {
        let points = self.medians(quantity);
        let xy: Vec<(f64, f64)> = points.iter().map(|&(m, v)| (m as f64, v)).collect();
        let (fit, note) = match fit_loglog_slope(&xy) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(format!("degenerate: {e}"))),
        };
        let out = SlopeFit { quantity: quantity.into(), points, fit, note };
        self.fits.push(out.clone());
        out
    }

    /// Fits `quantity` and checks its slope against `[lo, hi]`; a degenerate
    /// fit fails the check.
    pub fn slope_check(&mut self, quantity: &str, lo: f64, hi: f64) {
        let fit = self.fit_quantity(quantity);
        let measured = fit.fit.map_or(f64::NAN, |f| f.slope);
        let mut check = Check::within(format!("{quantity}_slope"), measured, lo, hi);
        if let Some(note) = fit.note {
            check.expected.push_str(&format!(" ({note})"));
        }
        self.checks.push(check);
    }

    pub fn raw_csv(&self) -> String {
        let mut out = String::from("quantity,m,seed,value,status\n");
        for r in &self.raw {
            let status = match r.status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Diverged { last_good_time } => format!("diverged@{last_good_time:e}"),
            };
            let _ = writeln!(out, "{},{},{},{:e},{status}", r.quantity, r.m, r.seed, r.value);
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("quantity,slope,intercept,residual,widths,medians\n");
        for f in &self.fits {
            let (s, i, r) = f.fit.map_or((String::new(), String::new(), String::new()), |f| {
                (format!("{:e}", f.slope), format!("{:e}", f.intercept), format!("{:e}", f.residual))
            });
            let widths: Vec<String> = f.points.iter().map(|p| p.0.to_string()).collect();
            let medians: Vec<String> = f.points.iter().map(|p| format!("{:e}", p.1)).collect();
            let _ = writeln!(out, "{},{s},{i},{r},{},{}", f.quantity, widths.join(";"), medians.join(";"));
        }
        out
    }

    pub fn verdict_text(&self) -> String {
        let mut out = format!("experiment: {}\n", self.experiment);
        let _ = writeln!(out, "config: {}", serde_json::to_string(&self.config).unwrap_or_default());
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {}: measured {:.6} expected {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "verdict: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    /// Writes `<experiment>_raw.csv`, `<experiment>_summary.csv` and
    /// `<experiment>_verdict.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = self.experiment.name();
        let files = [
            (format!("{name}_raw.csv"), self.raw_csv()),
            (format!("{name}_summary.csv"), self.summary_csv()),
            (format!("{name}_verdict.txt"), self.verdict_text()),
        ];
        let mut written = Vec::new();
        for (file, body) in files {
            let path = dir.join(file);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}
