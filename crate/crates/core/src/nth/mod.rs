//! The truncated hierarchy: a closed ODE on outputs and kernels `K̃^(2..p)`
//! with the top kernel frozen, its extension to a new input, and the
//! Taylor update of the NTK across one discrete gradient step.

mod checkpoint;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ode;
use crate::kernels::{kernel_hierarchy, kernel_hierarchy_at, kernel_order, ntk_gram, Directions, KernelTensor};
use crate::network::{DataSet, InputAssumptions, NetworkParams};
use crate::numerics::{norm2, sym_eigen, Matrix};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

/// Time grid shared by truncated runs and the exact flow they are compared to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
}

impl Schedule {
    /// Snapshots at `0` and `t_end`.
    pub fn new(t_end: f64, dt: f64) -> Self {
        let snapshot_times = if t_end > 0.0 { vec![0.0, t_end] } else { vec![0.0] };
        Schedule { t_end, dt, snapshot_times }
    }

    /// Snapshots at `k · spacing` and at `t_end`.
    pub fn with_snapshot_every(self, spacing: f64) -> Self {
        let times = crate::flow::FlowConfig::new(self.t_end, self.dt).with_snapshot_every(spacing).snapshot_times;
        Schedule { snapshot_times: times, ..self }
    }

    pub fn with_snapshot_times(self, snapshot_times: Vec<f64>) -> Self {
        Schedule { snapshot_times, ..self }
    }
}

/// Outputs `f̃` and kernels `K̃^(2), …, K̃^(p)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyState {
    pub time: f64,
    pub outputs: Vec<f64>,
    pub kernels: Vec<KernelTensor>,
}

impl HierarchyState {
    /// Truncation order `p`.
    pub fn order(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn n(&self) -> usize {
        self.outputs.len()
    }

    pub fn kernel(&self, r: usize) -> Option<&KernelTensor> {
        r.checked_sub(2).and_then(|i| self.kernels.get(i))
    }

    /// `f̃`, then each kernel by ascending order, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.outputs.clone();
        for k in &self.kernels {
            out.extend_from_slice(k.values());
        }
        out
    }

    fn with_flat(&self, flat: &[f64], time: f64) -> Result<Self> {
        let n = self.n();
        let mut at = n;
        let mut kernels = Vec::with_capacity(self.kernels.len());
        for k in &self.kernels {
            let len = k.values().len();
            kernels.push(KernelTensor::new(k.order(), k.shape().to_vec(), flat[at..at + len].to_vec(), k.snapshot())?);
            at += len;
        }
        Ok(HierarchyState { time, outputs: flat[..n].to_vec(), kernels })
    }

    fn check(&self, data: &DataSet) -> Result<()> {
        let n = self.n();
        if n != data.n() {
            return Err(Error::invalid(format!("state has n = {n}, data has n = {}", data.n())));
        }
        if self.kernels.is_empty() {
            return Err(Error::invalid("state carries no kernels"));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            if k.order() != i + 2 || k.shape().iter().any(|&s| s != n) {
                return Err(Error::invalid(format!(
                    "kernel slot {i} has order {} and shape {:?}",
                    k.order(),
                    k.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Output and kernel rows `K̃^(r)(x, ·)` for one new input.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionState {
    pub time: f64,
    pub output: f64,
    /// Shape `[1, n, n, …]` for `r = 2..=p`.
    pub kernels: Vec<KernelTensor>,
}

/// Joint trajectory of the training hierarchy and the new-point rows.
#[derive(Clone, Debug)]
pub struct PredictionRun {
    pub train: Vec<HierarchyState>,
    pub new_point: Vec<PredictionState>,
}

impl PredictionRun {
    /// `f̃_x` at the last snapshot.
    pub fn final_output(&self) -> Option<f64> {
        self.new_point.last().map(|s| s.output)
    }
}

/// `f̃(0) = f(θ₀)` and `K̃^(r)(0) = K^(r)_0` for `r = 2..=p`.
pub fn init_state(params0: &NetworkParams, data: &DataSet, p: usize) -> Result<HierarchyState> {
    let kernels = kernel_hierarchy(params0, data, p)?;
    Ok(HierarchyState { time: 0.0, outputs: params0.outputs(data)?, kernels })
}

/// Derivative of a block whose leading slot has `lead` entries: outputs of
/// length `lead`, then `K^(r)` of length `lead · n^(r-1)` for `r = 2..=p`.
/// The top kernel's derivative is zero.
fn block_rhs(block: &[f64], lead: usize, n: usize, p: usize, resid: &[f64], out: &mut [f64]) {
    let scale = -1.0 / n as f64;
    let mut lens = vec![lead];
    for r in 2..=p {
        lens.push(lead * n.pow(r as u32 - 1));
    }
    let mut starts = vec![0usize];
    for l in &lens {
        starts.push(starts.last().unwrap() + l);
    }
    for level in 0..lens.len() {
        let dst = &mut out[starts[level]..starts[level + 1]];
        if level + 1 == lens.len() {
            dst.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let src = &block[starts[level + 1]..starts[level + 2]];
        dst.par_iter_mut().with_min_len(256).zip(src.par_chunks(n).with_min_len(256)).for_each(|(d, row)| {
            *d = scale * row.iter().zip(resid).map(|(a, b)| a * b).sum::<f64>();
        });
    }
}

fn block_len(lead: usize, n: usize, p: usize) -> usize {
    lead + (2..=p).map(|r| lead * n.pow(r as u32 - 1)).sum::<usize>()
}

/// `∂_t f̃ = −(1/n) K̃^(2)(f̃ − y)`, `∂_t K̃^(r) = −(1/n) Σ_β K̃^(r+1)(…, β)(f̃_β − y_β)`
/// for `r < p`, and `∂_t K̃^(p) = 0`, in the flat state order.
pub fn truncated_rhs(state: &HierarchyState, data: &DataSet) -> Result<Vec<f64>> {
    state.check(data)?;
    let flat = state.to_flat();
    let mut out = vec![0.0; flat.len()];
    let resid: Vec<f64> = state.outputs.iter().zip(data.labels()).map(|(f, y)| f - y).collect();
    block_rhs(&flat, state.n(), state.n(), state.order(), &resid, &mut out);
    Ok(out)
}

/// RK4 on the concatenated state, snapshots as in the exact flow.
pub fn integrate_truncated(state: &HierarchyState, data: &DataSet, schedule: &Schedule) -> Result<Vec<HierarchyState>> {
    state.check(data)?;
    let (n, p) = (state.n(), state.order());
    let labels = data.labels();
    let mut snaps = Vec::new();
    ode::integrate(
        state.to_flat(),
        schedule.t_end,
        schedule.dt,
        &schedule.snapshot_times,
        |y| {
            let resid: Vec<f64> = y[..n].iter().zip(labels).map(|(f, l)| f - l).collect();
            let mut out = vec![0.0; y.len()];
            block_rhs(y, n, n, p, &resid, &mut out);
            Ok(out)
        },
        |t, y| {
            snaps.push(state.with_flat(y, state.time + t)?);
            Ok(true)
        },
    )?;
    Ok(snaps)
}

/// Integrates the training hierarchy jointly with the rows `K̃^(r)(x, ·)`
/// and the output `f̃_x` for a new input `x_new`.
pub fn predict_new_point(
    params0: &NetworkParams,
    data: &DataSet,
    x_new: &[f64],
    p: usize,
    schedule: &Schedule,
) -> Result<PredictionRun> {
    if x_new.len() != data.d() {
        return Err(Error::invalid(format!("x_new has dimension {}, expected {}", x_new.len(), data.d())));
    }
    let c = InputAssumptions::default().c;
    let norm = norm2(x_new);
    if !(norm > c && norm <= 1.0 / c) {
        return Err(Error::invalid(format!("x_new has norm {norm:.6}, outside ({c}, {}]", 1.0 / c)));
    }
    let n = data.n();
    let mut probes = data.inputs().to_vec();
    probes.push(x_new.to_vec());
    let all = kernel_hierarchy_at(params0, &probes, data, p)?;
    let train_kernels: Vec<KernelTensor> = all.iter().map(|k| k.slice_probes(0..n, 0..n)).collect();
    let x_kernels: Vec<KernelTensor> = all.iter().map(|k| k.slice_probes(n..n + 1, 0..n)).collect();
    let train = HierarchyState { time: 0.0, outputs: params0.outputs(data)?, kernels: train_kernels };
    let x_state = PredictionState { time: 0.0, output: params0.forward(x_new)?.output, kernels: x_kernels };

    let train_len = block_len(n, n, p);
    let mut y0 = train.to_flat();
    y0.push(x_state.output);
    for k in &x_state.kernels {
        y0.extend_from_slice(k.values());
    }
    let labels = data.labels();
    let mut train_snaps = Vec::new();
    let mut x_snaps = Vec::new();
    ode::integrate(
        y0,
        schedule.t_end,
        schedule.dt,
        &schedule.snapshot_times,
        |y| {
            let resid: Vec<f64> = y[..n].iter().zip(labels).map(|(f, l)| f - l).collect();
            let mut out = vec![0.0; y.len()];
            let (tr, xo) = out.split_at_mut(train_len);
            block_rhs(&y[..train_len], n, n, p, &resid, tr);
            block_rhs(&y[train_len..], 1, n, p, &resid, xo);
            Ok(out)
        },
        |t, y| {
            train_snaps.push(train.with_flat(&y[..train_len], t)?);
            let xs = &y[train_len..];
            let mut at = 1;
            let mut kernels = Vec::with_capacity(x_state.kernels.len());
            for k in &x_state.kernels {
                let len = k.values().len();
                kernels.push(KernelTensor::new(
                    k.order(),
                    k.shape().to_vec(),
                    xs[at..at + len].to_vec(),
                    k.snapshot(),
                )?);
                at += len;
            }
            x_snaps.push(PredictionState { time: t, output: xs[0], kernels });
            Ok(true)
        },
    )?;
    Ok(PredictionRun { train: train_snaps, new_point: x_snaps })
}

/// Closed-form frozen-kernel dynamics
/// `f(t) − y = exp(−tK/n)(f(0) − y)` via the eigendecomposition of `K`.
pub fn frozen_kernel_solution(kernel: &Matrix, outputs0: &[f64], labels: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = outputs0.len();
    if kernel.shape() != (n, n) || labels.len() != n {
        return Err(Error::invalid("kernel, outputs and labels disagree in size"));
    }
    let eig = sym_eigen(kernel)?;
    let r0: Vec<f64> = outputs0.iter().zip(labels).map(|(f, y)| f - y).collect();
    let mut out = labels.to_vec();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let v: Vec<f64> = (0..n).map(|i| eig.vectors[(i, k)]).collect();
        let c = v.iter().zip(&r0).map(|(a, b)| a * b).sum::<f64>() * (-t * lambda / n as f64).exp();
        for i in 0..n {
            out[i] += c * v[i];
        }
    }
    Ok(out)
}

/// Which coefficients multiply the higher kernels in the Taylor step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaylorCoefficients {
    /// `(−η/n)^k / k!` on the `k`-fold residual sum of `K^(k+2)`, `k = 1..=p−2`.
    Derived,
    /// `(−η)^r / n^r` on the `(r−2)`-fold residual sum of `K^(r)`, `r = 3..=p−1`.
    Printed,
}

/// Predicted and recomputed NTK after one discrete gradient step.
#[derive(Clone, Debug)]
pub struct TaylorStep {
    pub predicted: Matrix,
    pub recomputed: Matrix,
    /// `‖predicted − recomputed‖∞ / ‖recomputed‖∞`.
    pub relative_error: f64,
}

/// `K^(2)(θ − η∇L)` from the Taylor polynomial in the step direction, with
/// the directly recomputed kernel for comparison.
pub fn taylor_discrete_step(params: &NetworkParams, data: &DataSet, eta: f64, p: usize) -> Result<TaylorStep> {
    taylor_discrete_step_with(params, data, eta, p, TaylorCoefficients::Derived)
}

/// [`taylor_discrete_step`] with a choice of coefficients.
pub fn taylor_discrete_step_with(
    params: &NetworkParams,
    data: &DataSet,
    eta: f64,
    p: usize,
    coefficients: TaylorCoefficients,
) -> Result<TaylorStep> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if p < 3 {
        return Err(Error::invalid(format!("Taylor step needs p >= 3, got {p}")));
    }
    let n = data.n();
    let nf = n as f64;
    // v = Σ_β ∇f_β (f_β − y_β); the residual sums collapse onto v by multilinearity.
    let mut v = vec![0.0; params.param_count()];
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        let trace = params.forward(x)?;
        params.accumulate_gradient(&trace, trace.output - y, &mut v);
    }
    let dirs = [v];
    let base = ntk_gram(params, data)?;
    let mut predicted = base.values().to_vec();
    let orders: Vec<(usize, f64)> = match coefficients {
        TaylorCoefficients::Derived => (3..=p)
            .map(|r| {
                let k = (r - 2) as i32;
                let fact: f64 = (1..=k).map(f64::from).product();
                (r, (-eta / nf).powi(k) / fact)
            })
            .collect(),
        TaylorCoefficients::Printed => (3..p).map(|r| (r, (-eta).powi(r as i32) / nf.powi(r as i32))).collect(),
    };
    for (r, coef) in orders {
        let k = kernel_order(params, data.inputs(), Directions::Fixed(&dirs), r)?;
        for (out, val) in predicted.iter_mut().zip(k.values()) {
            *out += coef * val;
        }
    }
    let mut theta = params.flatten();
    for (t, g) in theta.iter_mut().zip(&dirs[0]) {
        *t -= eta / nf * g;
    }
    let recomputed = ntk_gram(&params.with_flat(&theta)?, data)?.to_matrix()?;
    let predicted = Matrix::from_vec(n, n, predicted)?;
    let relative_error = crate::kernels::relative_error(predicted.as_slice(), recomputed.as_slice());
    Ok(TaylorStep { predicted, recomputed, relative_error })
}
