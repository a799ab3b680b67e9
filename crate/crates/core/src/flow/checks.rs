//! Identity and invariant checks over a recorded trajectory.

use serde::Serialize;

use super::{Snapshot, TrajectoryLog};
use crate::error::{Error, Result};
use crate::kernels::{relative_error, KernelTensor};

/// Largest relative deviation between a centered time difference and the
/// kernel expression it should equal.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    /// Order of the differentiated quantity: 1 for `f`, `r` for `K^(r)`.
    pub order: usize,
    pub max_relative_deviation: f64,
    /// `(time, deviation)` at every interior snapshot.
    pub per_snapshot: Vec<(f64, f64)>,
}

/// Outcome of an inequality monitored along a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub name: String,
    pub holds: bool,
    /// Worst observed value of the monitored quantity.
    pub worst: f64,
    /// The threshold it is compared against.
    pub bound: f64,
}

/// Decay-rate check against both normalizations of the eigenvalue bound.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// `−∂_t Σr² ≥ (2λ_min/n − tol) Σr²`.
    pub factor_two: InvariantReport,
    /// `−∂_t Σr² ≥ (λ_min/n − tol) Σr²`.
    pub printed: InvariantReport,
}

/// Second-order derivative weights at the middle of three possibly uneven
/// points, applied to differences from the middle value.
fn three_point(t: [f64; 3]) -> [f64; 3] {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
}

fn derivative(w: &[f64; 3], v: [f64; 3]) -> f64 {
    w[0] * (v[0] - v[1]) + w[2] * (v[2] - v[1])
}

fn interior(traj: &TrajectoryLog) -> Result<impl Iterator<Item = (f64, [f64; 3], [&Snapshot; 3])>> {
    let s = &traj.snapshots;
    if s.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 snapshots, have {}", s.len())));
    }
    Ok(s.windows(3).map(|w| {
        let weights = three_point([w[0].time, w[1].time, w[2].time]);
        (w[1].time, weights, [&w[0], &w[1], &w[2]])
    }))
}

fn kernel_of(s: &Snapshot, order: usize) -> Result<&KernelTensor> {
    s.kernel(order).ok_or_else(|| Error::invalid(format!("kernel of order {order} not recorded at t = {}", s.time)))
}

fn contract_last(k: &KernelTensor, r: &[f64]) -> Vec<f64> {
    let scale = -1.0 / r.len() as f64;
    let mut out = k.contract_last(r);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// `∂_t f_α` against `−(1/n) Σ_β K^(2)_t(α, β)(f_β − y_β)`.
pub fn descent_identity_check(traj: &TrajectoryLog) -> Result<IdentityReport> {
    let mut per = Vec::new();
    for (t, w, s) in interior(traj)? {
        let lhs: Vec<f64> = (0..s[1].residuals.len())
            .map(|a| derivative(&w, [s[0].residuals[a], s[1].residuals[a], s[2].residuals[a]]))
            .collect();
        let rhs = contract_last(kernel_of(s[1], 2)?, &s[1].residuals);
        per.push((t, relative_error(&lhs, &rhs)));
    }
    Ok(report(1, per))
}

/// `∂_t K^(r)` against `−(1/n) Σ_β K^(r+1)(…, β)(f_β − y_β)`.
pub fn hierarchy_identity_check_order(traj: &TrajectoryLog, r: usize) -> Result<IdentityReport> {
    if r < 2 {
        return Err(Error::invalid("hierarchy identity starts at order 2"));
    }
    let mut per = Vec::new();
    for (t, w, s) in interior(traj)? {
        let k = [kernel_of(s[0], r)?, kernel_of(s[1], r)?, kernel_of(s[2], r)?];
        let lhs: Vec<f64> = (0..k[1].values().len())
            .map(|i| derivative(&w, [k[0].values()[i], k[1].values()[i], k[2].values()[i]]))
            .collect();
        let rhs = contract_last(kernel_of(s[1], r + 1)?, &s[1].residuals);
        per.push((t, relative_error(&lhs, &rhs)));
    }
    Ok(report(r, per))
}

/// Every hierarchy identity the recorded kernels allow, lowest order first.
pub fn hierarchy_identity_check(traj: &TrajectoryLog) -> Result<Vec<IdentityReport>> {
    let top = traj.config.kernel_order;
    if top < 3 {
        return Err(Error::invalid("hierarchy identities need kernels up to order 3 or more"));
    }
    (2..top).map(|r| hierarchy_identity_check_order(traj, r)).collect()
}

fn report(order: usize, per_snapshot: Vec<(f64, f64)>) -> IdentityReport {
    let max_relative_deviation = per_snapshot.iter().fold(0.0_f64, |m, &(_, d)| m.max(d));
    IdentityReport { order, max_relative_deviation, per_snapshot }
}

/// `loss(t_{k+1}) ≤ loss(t_k) + 10·dt⁵` for every consecutive pair.
pub fn monotone_loss_check(traj: &TrajectoryLog) -> InvariantReport {
    let slack = 10.0 * traj.config.dt.powi(5);
    let worst = traj.snapshots.windows(2).map(|w| w[1].loss - w[0].loss).fold(f64::NEG_INFINITY, f64::max);
    InvariantReport { name: "monotone_loss".into(), holds: !(worst > slack), worst, bound: slack }
}

/// Measured decay of `Σr²` against `c·λ_min(K_t)/n · Σr²` for `c = 2` and `c = 1`.
pub fn instantaneous_decay_check(traj: &TrajectoryLog, tol: f64) -> Result<DecayReport> {
    let n = traj.snapshots.first().map_or(1, |s| s.residuals.len()) as f64;
    let sq = |s: &Snapshot| s.residuals.iter().map(|r| r * r).sum::<f64>();
    let mut worst_two = f64::INFINITY;
    let mut worst_one = f64::INFINITY;
    for (_, w, s) in interior(traj)? {
        let lambda = s[1].lambda_min.ok_or_else(|| Error::invalid("decay check needs the lambda_min observer"))?;
        let total = sq(s[1]);
        if total == 0.0 {
            continue;
        }
        let rate = -derivative(&w, [sq(s[0]), total, sq(s[2])]) / total;
        worst_two = worst_two.min(rate - 2.0 * lambda / n);
        worst_one = worst_one.min(rate - lambda / n);
    }
    let make = |name: &str, worst: f64| InvariantReport { name: name.into(), holds: worst >= -tol, worst, bound: -tol };
    Ok(DecayReport { factor_two: make("decay_factor_two", worst_two), printed: make("decay_printed", worst_one) })
}

/// Every norm stays within a factor 2 of its initial value.
pub fn norm_stability_check(traj: &TrajectoryLog) -> Result<InvariantReport> {
    let norms: Vec<&Vec<f64>> = traj.snapshots.iter().filter_map(|s| s.norms.as_ref()).collect();
    let first = norms.first().ok_or_else(|| Error::invalid("norm observer was off"))?;
    let mut worst = 1.0_f64;
    for v in &norms {
        for (x, x0) in v.iter().zip(first.iter()) {
            let ratio = x / x0;
            worst = worst.max(ratio).max(1.0 / ratio);
        }
    }
    Ok(InvariantReport { name: "norm_stability".into(), holds: worst <= 2.0, worst, bound: 2.0 })
}

/// `min_t λ_min(K_t) / λ_min(K_0)` compared against 1/2.
pub fn lambda_min_stability(traj: &TrajectoryLog) -> Result<InvariantReport> {
    let lambdas: Vec<f64> = traj.snapshots.iter().filter_map(|s| s.lambda_min).collect();
    let l0 = *lambdas.first().ok_or_else(|| Error::invalid("lambda_min observer was off"))?;
    let worst = lambdas.iter().fold(f64::INFINITY, |m, &l| m.min(l / l0));
    Ok(InvariantReport { name: "lambda_min_stability".into(), holds: worst >= 0.5, worst, bound: 0.5 })
}

/// `max_t max_{α,β} |K^(2)_t − K^(2)_0|`.
pub fn kernel_drift(traj: &TrajectoryLog) -> Result<f64> {
    let k0 = kernel_of(traj.snapshots.first().ok_or_else(|| Error::invalid("empty trajectory"))?, 2)?;
    let mut worst = 0.0_f64;
    for s in &traj.snapshots {
        let k = kernel_of(s, 2)?;
        for (a, b) in k.values().iter().zip(k0.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
