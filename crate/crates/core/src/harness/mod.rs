//! Width and seed sweeps, log-log slope fits and report files.

mod experiments;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Activation;

pub use experiments::{
    decay_experiment, decay_run, drift_scaling_experiment, init_kernel_scaling_experiment, run_experiment,
    truncation_error_experiment, DecayRun,
};
pub use report::{Check, RawRecord, RunStatus, ScalingReport, SlopeFit};

/// The experiments a sweep can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    DriftScaling,
    InitKernelScaling,
    TruncationError,
    Decay,
}

impl Experiment {
    pub const ALL: [Experiment; 4] =
        [Experiment::DriftScaling, Experiment::InitKernelScaling, Experiment::TruncationError, Experiment::Decay];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::DriftScaling => "drift_scaling",
            Experiment::InitKernelScaling => "init_kernel_scaling",
            Experiment::TruncationError => "truncation_error",
            Experiment::Decay => "decay",
        }
    }

    /// Whether the experiment ends in a slope fit over widths.
    pub fn fits_slopes(&self) -> bool {
        !matches!(self, Experiment::Decay)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment `{s}`")))
    }
}

/// Everything needed to regenerate a sweep bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub d: usize,
    pub depth: usize,
    pub activation: Activation,
    pub sigma_w: f64,
    pub sigma_a: f64,
    /// Truncation orders for the truncation experiment.
    pub orders: Vec<usize>,
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_every: f64,
    /// Horizon of the decay experiment, which stops early at a 100× loss drop.
    pub decay_t_end: f64,
    /// Seed of the synthetic training set, shared by every run.
    pub data_seed: u64,
    pub experiments: Vec<Experiment>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            widths: vec![64, 128, 256, 512, 1024],
            seeds: vec![0, 1, 2, 3, 4],
            n: 4,
            d: 8,
            depth: 2,
            activation: Activation::Tanh,
            sigma_w: 1.0,
            sigma_a: 1.0,
            orders: vec![2, 3],
            t_end: 2.0,
            dt: 0.02,
            snapshot_every: 0.25,
            decay_t_end: 50.0,
            data_seed: 0,
            experiments: vec![Experiment::DriftScaling],
        }
    }
}

impl SweepConfig {
    /// Checks the sweep shape; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, msg: String| Err(Error::Config { field: f.into(), msg });
        if self.widths.is_empty() || self.widths.contains(&0) {
            return field("widths", "need at least one positive width".into());
        }
        if self.experiments.iter().any(Experiment::fits_slopes) && self.widths.len() < 3 {
            return field("widths", format!("slope fits need >= 3 widths, got {}", self.widths.len()));
        }
        if self.seeds.is_empty() {
            return field("seeds", "need at least one seed".into());
        }
        if self.n == 0 {
            return field("n", "must be positive".into());
        }
        if self.d == 0 {
            return field("d", "must be positive".into());
        }
        if self.depth == 0 {
            return field("depth", "must be positive".into());
        }
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return field("sigma_w", format!("must be positive, got {}", self.sigma_w));
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            return field("sigma_a", format!("must be positive, got {}", self.sigma_a));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return field("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return field("t_end", format!("must be non-negative, got {}", self.t_end));
        }
        if !(self.decay_t_end >= 0.0 && self.decay_t_end.is_finite()) {
            return field("decay_t_end", format!("must be non-negative, got {}", self.decay_t_end));
        }
        if !(self.snapshot_every > 0.0) {
            return field("snapshot_every", format!("must be positive, got {}", self.snapshot_every));
        }
        if self.experiments.contains(&Experiment::TruncationError) {
            if self.orders.is_empty() {
                return field("orders", "truncation experiment needs at least one order".into());
            }
            if let Some(p) = self.orders.iter().find(|&&p| !(2..=crate::kernels::MAX_KERNEL_ORDER).contains(&p)) {
                return field("orders", format!("order {p} outside 2..={}", crate::kernels::MAX_KERNEL_ORDER));
            }
        }
        Ok(())
    }
}

/// Ordinary least squares on `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("slope fit needs >= 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid(format!("slope fit needs positive finite values, got ({x}, {y})")));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit { slope, intercept, residual: (sse / k).sqrt() })
}

/// Median, averaging the middle pair for even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}
