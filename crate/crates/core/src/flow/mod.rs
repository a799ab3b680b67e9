//! Continuous-time gradient descent on the flat parameter vector, recorded
//! through snapshot observers.

mod checks;
pub mod ode;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_hierarchy, ntk_gram, KernelTensor, MAX_KERNEL_ORDER};
use crate::network::{loss_gradient, DataSet, NetworkParams};
use crate::numerics::{min_eigenvalue_sym, norm2, spectral_norm};

pub use checks::{
    descent_identity_check, hierarchy_identity_check, hierarchy_identity_check_order, instantaneous_decay_check,
    kernel_drift, lambda_min_stability, monotone_loss_check, norm_stability_check, DecayReport, IdentityReport,
    InvariantReport,
};

/// Power-iteration budget for the norm observer.
pub const NORM_MAX_ITER: usize = 50;
/// Power-iteration tolerance for the norm observer.
pub const NORM_TOL: f64 = 1e-8;

/// Integration horizon, step and observer selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    /// Highest kernel order recorded at each snapshot; 0 records none.
    pub kernel_order: usize,
    pub observe_norms: bool,
    pub observe_lambda_min: bool,
    pub keep_params: bool,
    /// Stop at the first snapshot where the loss has dropped by this factor.
    pub stop_loss_ratio: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig::new(50.0, 0.01).with_snapshot_every(0.5)
    }
}

impl FlowConfig {
    /// Snapshots only at `0` and `t_end`, NTK and eigenvalue observers on.
    pub fn new(t_end: f64, dt: f64) -> Self {
        let snapshot_times = if t_end > 0.0 { vec![0.0, t_end] } else { vec![0.0] };
        FlowConfig {
            t_end,
            dt,
            snapshot_times,
            kernel_order: 2,
            observe_norms: true,
            observe_lambda_min: true,
            keep_params: false,
            stop_loss_ratio: Some(100.0),
        }
    }

    /// Snapshots at `k · spacing` up to `t_end`, plus `t_end` itself.
    pub fn with_snapshot_every(mut self, spacing: f64) -> Self {
        let mut times = Vec::new();
        if spacing > 0.0 && self.t_end.is_finite() {
            let count = (self.t_end / spacing + 1e-9).floor() as usize;
            times.extend((0..=count).map(|k| k as f64 * spacing));
            if let Some(&last) = times.last() {
                if self.t_end - last > 1e-9 * spacing {
                    times.push(self.t_end);
                }
            }
        }
        self.snapshot_times = times;
        self
    }

    pub fn with_snapshot_times(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_kernel_order(mut self, order: usize) -> Self {
        self.kernel_order = order;
        self
    }

    pub fn with_norms(mut self, on: bool) -> Self {
        self.observe_norms = on;
        self
    }

    pub fn with_lambda_min(mut self, on: bool) -> Self {
        self.observe_lambda_min = on;
        self
    }

    pub fn with_params(mut self, on: bool) -> Self {
        self.keep_params = on;
        self
    }

    pub fn with_stop_ratio(mut self, ratio: Option<f64>) -> Self {
        self.stop_loss_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ode::check_schedule(self.t_end, self.dt, &self.snapshot_times)?;
        if self.kernel_order == 1 || self.kernel_order > MAX_KERNEL_ORDER {
            return Err(Error::invalid(format!(
                "kernel observer order must be 0 or in 2..={MAX_KERNEL_ORDER}, got {}",
                self.kernel_order
            )));
        }
        if let Some(r) = self.stop_loss_ratio {
            if !(r > 1.0) {
                return Err(Error::invalid(format!("stop ratio must exceed 1, got {r}")));
            }
        }
        Ok(())
    }
}

/// Observables at one instant.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub loss: f64,
    /// `f_β(t)`.
    pub outputs: Vec<f64>,
    /// `f_β(t) − y_β`.
    pub residuals: Vec<f64>,
    /// `K^(2)_t, …` up to the requested order.
    pub kernels: Vec<KernelTensor>,
    /// `‖W^(ℓ)‖₂/√m` for each layer, then `‖a‖₂/√m`.
    pub norms: Option<Vec<f64>>,
    pub lambda_min: Option<f64>,
    pub params: Option<Vec<f64>>,
}

impl Snapshot {
    /// Kernel of the given order, if it was recorded.
    pub fn kernel(&self, order: usize) -> Option<&KernelTensor> {
        self.kernels.iter().find(|k| k.order() == order)
    }
}

/// Every snapshot of one gradient-flow run plus its final state.
#[derive(Clone, Debug)]
pub struct TrajectoryLog {
    pub config: FlowConfig,
    pub depth: usize,
    pub snapshots: Vec<Snapshot>,
    pub final_time: f64,
    pub final_params: Vec<f64>,
}

impl TrajectoryLog {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.loss).collect()
    }

    /// Main table: `time, loss, lambda_min, residual_*, norm_*`.
    pub fn to_csv_string(&self) -> String {
        let n = self.snapshots.first().map_or(0, |s| s.residuals.len());
        let mut out = String::from("time,loss,lambda_min");
        for i in 1..=n {
            let _ = write!(out, ",residual_{i}");
        }
        if self.config.observe_norms {
            for l in 1..=self.depth {
                let _ = write!(out, ",norm_w{l}");
            }
            out.push_str(",norm_a");
        }
        out.push('\n');
        for s in &self.snapshots {
            let _ = write!(out, "{:e},{:e},", s.time, s.loss);
            if let Some(l) = s.lambda_min {
                let _ = write!(out, "{l:e}");
            }
            for r in &s.residuals {
                let _ = write!(out, ",{r:e}");
            }
            if let Some(norms) = &s.norms {
                for v in norms {
                    let _ = write!(out, ",{v:e}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `trajectory.csv`, one sidecar file per recorded kernel and
    /// `kernels_index.csv` mapping `(snapshot, time, order)` to file names.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let main = dir.join("trajectory.csv");
        fs::write(&main, self.to_csv_string())?;
        written.push(main);
        if self.snapshots.iter().any(|s| !s.kernels.is_empty()) {
            let kdir = dir.join("kernels");
            fs::create_dir_all(&kdir)?;
            let mut index = String::from("snapshot,time,order,file\n");
            for (k, s) in self.snapshots.iter().enumerate() {
                for kernel in &s.kernels {
                    let name = format!("k{}_s{k:04}.csv", kernel.order());
                    let path = kdir.join(&name);
                    fs::write(&path, kernel.to_csv_string())?;
                    let _ = writeln!(index, "{k},{:e},{},kernels/{name}", s.time, kernel.order());
                    written.push(path);
                }
            }
            let ipath = dir.join("kernels_index.csv");
            fs::write(&ipath, index)?;
            written.push(ipath);
        }
        Ok(written)
    }
}

/// `∂_tθ = −∇L(θ) = −(1/n) Σ_β ∇f_β (f_β − y_β)` in flat order.
pub fn gradient_flow_rhs(params: &NetworkParams, data: &DataSet) -> Result<Vec<f64>> {
    let mut g = loss_gradient(params, data)?;
    g.iter_mut().for_each(|v| *v = -*v);
    Ok(g)
}

/// Runs RK4 gradient flow from `params0` and records the configured observers.
pub fn integrate_flow(params0: &NetworkParams, data: &DataSet, config: &FlowConfig) -> Result<TrajectoryLog> {
    config.validate()?;
    if params0.input_dim() != data.d() {
        return Err(Error::invalid(format!("network expects d = {}, data has d = {}", params0.input_dim(), data.d())));
    }
    let mut work = params0.clone();
    let mut probe = params0.clone();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut initial_loss = None;

    let rhs = |theta: &[f64]| -> Result<Vec<f64>> {
        work.set_flat(theta)?;
        gradient_flow_rhs(&work, data)
    };
    let observe = |t: f64, theta: &[f64]| -> Result<bool> {
        probe.set_flat(theta)?;
        let snap = observe_snapshot(&probe, data, config, t, theta)?;
        let loss = snap.loss;
        snapshots.push(snap);
        let l0 = *initial_loss.get_or_insert(loss);
        Ok(match config.stop_loss_ratio {
            Some(ratio) => !(l0 > 0.0 && loss <= l0 / ratio),
            None => true,
        })
    };
    let (final_params, final_time) =
        ode::integrate(params0.flatten(), config.t_end, config.dt, &config.snapshot_times, rhs, observe)?;
    Ok(TrajectoryLog { config: config.clone(), depth: params0.depth(), snapshots, final_time, final_params })
}

fn observe_snapshot(
    params: &NetworkParams,
    data: &DataSet,
    config: &FlowConfig,
    time: f64,
    theta: &[f64],
) -> Result<Snapshot> {
    let outputs = params.outputs(data)?;
    let residuals: Vec<f64> = outputs.iter().zip(data.labels()).map(|(f, y)| f - y).collect();
    let loss = residuals.iter().map(|r| r * r).sum::<f64>() * 0.5 / data.n() as f64;
    let kernels =
        if config.kernel_order >= 2 { kernel_hierarchy(params, data, config.kernel_order)? } else { Vec::new() };
    let lambda_min = if config.observe_lambda_min {
        let k2 = match kernels.first() {
            Some(k) => k.to_matrix()?,
            None => ntk_gram(params, data)?.to_matrix()?,
        };
        Some(min_eigenvalue_sym(&k2)?)
    } else {
        None
    };
    let norms = config.observe_norms.then(|| {
        let scale = 1.0 / (params.width() as f64).sqrt();
        let mut v: Vec<f64> =
            params.weights().iter().map(|w| spectral_norm(w, NORM_MAX_ITER, NORM_TOL) * scale).collect();
        v.push(norm2(params.output_weights()) * scale);
        v
    });
    Ok(Snapshot {
        time,
        loss,
        outputs,
        residuals,
        kernels,
        norms,
        lambda_min,
        params: config.keep_params.then(|| theta.to_vec()),
    })
}
