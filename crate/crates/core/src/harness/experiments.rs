use rayon::prelude::*;
use serde::Serialize;

use super::{Check, Experiment, RawRecord, RunStatus, ScalingReport, SlopeFit, SweepConfig};
use crate::error::{Error, Result};
use crate::flow::{integrate_flow, kernel_drift, FlowConfig};
use crate::harness::fit_loglog_slope;
use crate::kernels::{kernel_hierarchy, ntk_gram};
use crate::network::{DataSet, NetworkConfig, NetworkParams};
use crate::nth::{init_state, integrate_truncated, Schedule};
use crate::numerics::{min_eigenvalue_sym, norm2};

/// Largest relative change of an audited quantity under `dt → dt/2`.
const DT_AUDIT_TOL: f64 = 1e-3;

fn network(cfg: &SweepConfig, m: usize, seed: u64) -> Result<NetworkParams> {
    let net = NetworkConfig { sigma_w: cfg.sigma_w, sigma_a: cfg.sigma_a, ..NetworkConfig::new(cfg.d, m, cfg.depth) };
    net.with_activation(cfg.activation).with_seed(seed).init_params()
}

fn dataset(cfg: &SweepConfig) -> Result<DataSet> {
    DataSet::synthetic(cfg.n, cfg.d, cfg.data_seed)
}

fn flow_config(cfg: &SweepConfig, dt: f64, kernel_order: usize) -> FlowConfig {
    FlowConfig::new(cfg.t_end, dt)
        .with_snapshot_every(cfg.snapshot_every)
        .with_kernel_order(kernel_order)
        .with_norms(false)
        .with_lambda_min(false)
        .with_stop_ratio(None)
}

fn require_widths(cfg: &SweepConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.widths.len() < 3 {
        return Err(Error::Config {
            field: "widths".into(),
            msg: format!("slope fits need >= 3 widths, got {}", cfg.widths.len()),
        });
    }
    Ok(())
}

/// Runs `run` over the width × seed grid in parallel and appends the
/// results in grid order. Diverged runs are recorded and skipped.
fn sweep<F>(report: &mut ScalingReport, run: F) -> Result<()>
where
    F: Fn(usize, u64) -> Result<Vec<(String, f64)>> + Sync,
{
    let grid: Vec<(usize, u64)> =
        report.config.widths.iter().flat_map(|&m| report.config.seeds.iter().map(move |&s| (m, s))).collect();
    let results: Vec<Result<Vec<(String, f64)>>> = grid.par_iter().map(|&(m, s)| run(m, s)).collect();
    for ((m, seed), result) in grid.into_iter().zip(results) {
        match result {
            Ok(values) => report.raw.extend(values.into_iter().map(|(quantity, value)| RawRecord {
                quantity,
                m,
                seed,
                value,
                status: RunStatus::Ok,
            })),
            Err(Error::Diverged { last_good_time }) => {
                report.notes.push(format!("run m={m} seed={seed} diverged after t={last_good_time:e}; excluded"));
                report.raw.push(RawRecord {
                    quantity: "run".into(),
                    m,
                    seed,
                    value: f64::NAN,
                    status: RunStatus::Diverged { last_good_time },
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Reruns the widest first-seed run at `dt/2` and records the relative change.
fn dt_audit(report: &mut ScalingReport, quantity: &str, run: impl Fn(f64) -> Result<f64>) -> Result<()> {
    let dt = report.config.dt;
    let (coarse, fine) = (run(dt)?, run(0.5 * dt)?);
    let change = if fine == 0.0 { (coarse - fine).abs() } else { ((coarse - fine) / fine).abs() };
    report.notes.push(format!("dt audit on {quantity}: dt={dt:e} gives {coarse:e}, dt/2 gives {fine:e}"));
    report.checks.push(Check::within("dt_audit", change, 0.0, DT_AUDIT_TOL));
    Ok(())
}

fn audit_point(cfg: &SweepConfig) -> (usize, u64) {
    (*cfg.widths.iter().max().unwrap_or(&1), cfg.seeds[0])
}

/// `max_t ‖K^(2)_t − K^(2)_0‖∞` along the exact flow against width.
pub fn drift_scaling_experiment(cfg: &SweepConfig) -> Result<ScalingReport> {
    require_widths(cfg)?;
    let data = dataset(cfg)?;
    let mut report = ScalingReport::new(Experiment::DriftScaling, cfg.clone());
    let drift = |m: usize, seed: u64, dt: f64| -> Result<f64> {
        let params = network(cfg, m, seed)?;
        kernel_drift(&integrate_flow(&params, &data, &flow_config(cfg, dt, 2))?)
    };
    sweep(&mut report, |m, s| Ok(vec![("drift".into(), drift(m, s, cfg.dt)?)]))?;
    report.slope_check("drift", -1.25, -0.75);
    let (m, s) = audit_point(cfg);
    dt_audit(&mut report, "drift", |dt| drift(m, s, dt))?;
    Ok(report)
}

/// `‖K^(r)_0‖∞` for `r = 2, 3, 4` against width, plus the across-seed
/// spread of the NTK entries.
pub fn init_kernel_scaling_experiment(cfg: &SweepConfig) -> Result<ScalingReport> {
    require_widths(cfg)?;
    let data = dataset(cfg)?;
    let n = cfg.n;
    let mut report = ScalingReport::new(Experiment::InitKernelScaling, cfg.clone());
    sweep(&mut report, |m, s| {
        let ks = kernel_hierarchy(&network(cfg, m, s)?, &data, 4)?;
        let mut out: Vec<(String, f64)> = ks.iter().map(|k| (format!("k{}_norm", k.order()), k.max_abs())).collect();
        for i in 0..n {
            for j in i..n {
                out.push((format!("k2_{i}_{j}"), ks[0].get(&[i, j])));
            }
        }
        Ok(out)
    })?;
    report.slope_check("k2_norm", -0.3, 0.3);
    report.slope_check("k3_norm", -1.3, -0.7);
    report.slope_check("k4_norm", -1.3, -0.7);

    let mut spread = Vec::new();
    for &m in &cfg.widths {
        let mut var_sum = 0.0;
        let mut entries = 0usize;
        for i in 0..n {
            for j in i..n {
                let v = report.values(&format!("k2_{i}_{j}"), m);
                if v.len() < 2 {
                    continue;
                }
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                var_sum += v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
                entries += 1;
            }
        }
        if entries > 0 {
            spread.push((m, (var_sum / entries as f64).sqrt()));
        }
    }
    let xy: Vec<(f64, f64)> = spread.iter().map(|&(m, v)| (m as f64, v)).collect();
    let (fit, note) = match fit_loglog_slope(&xy) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(format!("degenerate: {e}"))),
    };
    let slope = fit.map_or(f64::NAN, |f| f.slope);
    let shrinks = match (spread.first(), spread.last()) {
        (Some(a), Some(b)) => b.1 < a.1,
        _ => false,
    };
    report.fits.push(SlopeFit { quantity: "k2_seed_std".into(), points: spread, fit, note });
    report.checks.push(Check {
        name: "k2_seed_std_decreasing".into(),
        passed: slope < 0.0 && shrinks,
        measured: slope,
        expected: "log-log slope < 0 and narrowest spread at the largest width".into(),
    });
    if cfg.seeds.len() < 3 {
        report.notes.push("fewer than 3 seeds: the spread estimate is not a concentration measurement".into());
    }
    Ok(report)
}

struct TruncationErrors {
    delta_f: f64,
    delta_f0: f64,
    kernel: f64,
}

fn truncation_errors(cfg: &SweepConfig, data: &DataSet, m: usize, seed: u64, dt: f64) -> Result<Vec<TruncationErrors>> {
    let params = network(cfg, m, seed)?;
    let flow_cfg = flow_config(cfg, dt, 2);
    let exact = integrate_flow(&params, data, &flow_cfg)?;
    let schedule = Schedule::new(cfg.t_end, dt).with_snapshot_times(flow_cfg.snapshot_times.clone());
    cfg.orders
        .iter()
        .map(|&p| {
            let truncated = integrate_truncated(&init_state(&params, data, p)?, data, &schedule)?;
            let mut errs = TruncationErrors { delta_f: 0.0, delta_f0: 0.0, kernel: 0.0 };
            for (k, (e, t)) in exact.snapshots.iter().zip(&truncated).enumerate() {
                let df: Vec<f64> = e.outputs.iter().zip(&t.outputs).map(|(a, b)| a - b).collect();
                let norm = norm2(&df);
                if k == 0 {
                    errs.delta_f0 = norm;
                }
                errs.delta_f = errs.delta_f.max(norm);
                let ke = e.kernels[0]
                    .values()
                    .iter()
                    .zip(t.kernels[0].values())
                    .fold(0.0_f64, |w, (a, b)| w.max((a - b).abs()));
                errs.kernel = errs.kernel.max(ke);
            }
            Ok(errs)
        })
        .collect()
}

/// Exact flow against the truncated hierarchy for each order `p`:
/// `max_t ‖Δf(t)‖₂` and `max_t ‖K^(2)_t − K̃^(2)_t‖∞` against width.
pub fn truncation_error_experiment(cfg: &SweepConfig) -> Result<ScalingReport> {
    require_widths(cfg)?;
    if cfg.orders.is_empty() {
        return Err(Error::Config { field: "orders".into(), msg: "need at least one truncation order".into() });
    }
    let data = dataset(cfg)?;
    let mut report = ScalingReport::new(Experiment::TruncationError, cfg.clone());
    sweep(&mut report, |m, s| {
        let errs = truncation_errors(cfg, &data, m, s, cfg.dt)?;
        let mut out = Vec::new();
        for (p, e) in cfg.orders.iter().zip(errs) {
            out.push((format!("delta_f_p{p}"), e.delta_f));
            out.push((format!("kernel_err_p{p}"), e.kernel));
            out.push((format!("delta_f0_p{p}"), e.delta_f0));
        }
        Ok(out)
    })?;
    for &p in &cfg.orders {
        let centre = -(p as f64) / 2.0;
        report.slope_check(&format!("delta_f_p{p}"), centre - 0.35, centre + 0.35);
        report.slope_check(&format!("kernel_err_p{p}"), centre - 0.35, centre + 0.35);
    }
    let start = report.raw.iter().filter(|r| r.quantity.starts_with("delta_f0_")).fold(0.0_f64, |w, r| w.max(r.value));
    report.checks.push(Check {
        name: "delta_f_zero_at_start".into(),
        passed: start == 0.0,
        measured: start,
        expected: "0".into(),
    });
    let (m, s) = audit_point(cfg);
    let p = cfg.orders[cfg.orders.len() - 1];
    dt_audit(&mut report, &format!("delta_f_p{p}"), |dt| {
        Ok(truncation_errors(cfg, &data, m, s, dt)?.last().map_or(0.0, |e| e.delta_f))
    })?;
    Ok(report)
}

/// Loss decay of one exact-flow run against the eigenvalue bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRun {
    /// `λ_min(K^(2)_0)`.
    pub lambda_min: f64,
    pub initial_loss: f64,
    /// `max_t loss(t) / (loss(0) e^{−λ t/(2n)})`; 0 for a fitted start.
    pub worst_bound_ratio: f64,
    /// First time the loss falls by 100×, interpolated in log-loss between snapshots.
    pub time_to_100x: Option<f64>,
    /// `(2n/λ) ln(100 n)`.
    pub predicted_time_to_100x: f64,
}

/// Integrates until the loss falls 100× or `t_end`, sampling every `spacing`.
pub fn decay_run(params: &NetworkParams, data: &DataSet, t_end: f64, dt: f64, spacing: f64) -> Result<DecayRun> {
    let n = data.n() as f64;
    let lambda = min_eigenvalue_sym(&ntk_gram(params, data)?.to_matrix()?)?;
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!(
            "lambda_min(K_0) = {lambda:e} <= 0: the training inputs do not give a positive definite NTK"
        )));
    }
    let cfg = FlowConfig::new(t_end, dt)
        .with_snapshot_every(spacing)
        .with_kernel_order(0)
        .with_norms(false)
        .with_lambda_min(false)
        .with_stop_ratio(Some(100.0));
    let traj = integrate_flow(params, data, &cfg)?;
    let l0 = traj.snapshots[0].loss;
    let mut worst = 0.0_f64;
    for s in &traj.snapshots {
        let bound = l0 * (-lambda * s.time / (2.0 * n)).exp();
        if bound > 0.0 {
            worst = worst.max(s.loss / bound);
        }
    }
    let target = l0 / 100.0;
    let time_to_100x = if l0 == 0.0 {
        Some(0.0)
    } else {
        traj.snapshots.windows(2).find(|w| w[1].loss <= target).map(|w| {
            let (a, b) = (w[0].loss.ln(), w[1].loss.ln());
            let frac = if a > b { ((a - target.ln()) / (a - b)).clamp(0.0, 1.0) } else { 1.0 };
            w[0].time + frac * (w[1].time - w[0].time)
        })
    };
    Ok(DecayRun {
        lambda_min: lambda,
        initial_loss: l0,
        worst_bound_ratio: worst,
        time_to_100x,
        predicted_time_to_100x: 2.0 * n / lambda * (100.0 * n).ln(),
    })
}

/// Exponential loss decay against `e^{−λ t/(2n)}` for every (width, seed).
pub fn decay_experiment(cfg: &SweepConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    let data = dataset(cfg)?;
    let mut report = ScalingReport::new(Experiment::Decay, cfg.clone());
    if let Some(&m) = cfg.widths.iter().find(|&&m| m < 256 * cfg.n) {
        report.notes.push(format!("width {m} is below 256·n = {}; outside the wide regime", 256 * cfg.n));
    }
    sweep(&mut report, |m, s| {
        let run = decay_run(&network(cfg, m, s)?, &data, cfg.decay_t_end, cfg.dt, cfg.snapshot_every)?;
        Ok(vec![
            ("lambda_min".into(), run.lambda_min),
            ("initial_loss".into(), run.initial_loss),
            ("worst_bound_ratio".into(), run.worst_bound_ratio),
            ("time_to_100x".into(), run.time_to_100x.unwrap_or(f64::INFINITY)),
            ("predicted_time_to_100x".into(), run.predicted_time_to_100x),
        ])
    })?;
    let worst = report.raw.iter().filter(|r| r.quantity == "worst_bound_ratio").fold(0.0_f64, |w, r| w.max(r.value));
    report.checks.push(Check::within("decay_bound", worst, 0.0, 1.05));
    let lookup = |q: &str, m: usize, seed: u64| {
        report.raw.iter().find(|r| r.quantity == q && r.m == m && r.seed == seed).map(|r| r.value)
    };
    let mut notes = Vec::new();
    for r in report.raw.iter().filter(|r| r.quantity == "time_to_100x") {
        if let Some(p) = lookup("predicted_time_to_100x", r.m, r.seed) {
            notes.push(format!(
                "m={} seed={}: time to 100x {:e}, (2n/lambda) ln(100n) = {p:e}, ratio {:e}",
                r.m,
                r.seed,
                r.value,
                p / r.value
            ));
        }
    }
    report.notes.extend(notes);
    Ok(report)
}

/// Dispatches to the named experiment.
pub fn run_experiment(cfg: &SweepConfig, experiment: Experiment) -> Result<ScalingReport> {
    match experiment {
        Experiment::DriftScaling => drift_scaling_experiment(cfg),
        Experiment::InitKernelScaling => init_kernel_scaling_experiment(cfg),
        Experiment::TruncationError => truncation_error_experiment(cfg),
        Experiment::Decay => decay_experiment(cfg),
    }
}
