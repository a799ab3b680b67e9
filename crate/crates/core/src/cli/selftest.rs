//! Invariant suite on tiny networks.

use crate::error::Result;
use crate::flow::{
    descent_identity_check, hierarchy_identity_check_order, integrate_flow, monotone_loss_check, FlowConfig,
};
use crate::kernels::{kernel_fd_oracle, kernel_hierarchy, ntk_gram, ntk_layerwise, relative_error, FdStep};
use crate::network::{loss, loss_gradient, Activation, DataSet, NetworkConfig, NetworkParams};
use crate::nth::{
    frozen_kernel_solution, init_state, integrate_truncated, read_checkpoint, write_checkpoint, Schedule,
};

#[derive(Clone, Debug)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, value: f64, tol: f64) -> SelfCheck {
    SelfCheck {
        name: name.into(),
        passed: value.is_finite() && value <= tol,
        detail: format!("{value:e} (tol {tol:e})"),
    }
}

fn failed(name: &str, e: impl std::fmt::Display) -> SelfCheck {
    SelfCheck { name: name.into(), passed: false, detail: format!("error: {e}") }
}

fn tiny(m: usize, act: Activation) -> Result<(NetworkParams, DataSet)> {
    let params = NetworkConfig::new(3, m, 2).with_activation(act).with_seed(7).init_params()?;
    let data = DataSet::synthetic(3, 3, 11)?;
    Ok((params, data))
}

fn gradient_vs_fd() -> Result<f64> {
    let (params, data) = tiny(6, Activation::Tanh)?;
    let g = loss_gradient(&params, &data)?;
    let theta = params.flatten();
    let h = 1e-5;
    let mut fd = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[k] += h;
        dn[k] -= h;
        fd.push((loss(&params.with_flat(&up)?, &data)? - loss(&params.with_flat(&dn)?, &data)?) / (2.0 * h));
    }
    Ok(relative_error(&g, &fd))
}

fn ntk_routes() -> Result<f64> {
    let (params, data) = tiny(8, Activation::Tanh)?;
    Ok(relative_error(ntk_layerwise(&params, &data)?.total.values(), ntk_gram(&params, &data)?.values()))
}

fn k3_vs_fd() -> Result<f64> {
    let (params, data) = tiny(6, Activation::Tanh)?;
    let ks = kernel_hierarchy(&params, &data, 3)?;
    let fd = kernel_fd_oracle(&params, &data, 3, FdStep::Auto)?;
    Ok(relative_error(ks[1].values(), fd.values()))
}

fn identities() -> Result<(f64, f64, f64)> {
    let (params, data) = tiny(16, Activation::Tanh)?;
    let cfg = FlowConfig::new(0.2, 1e-3).with_snapshot_every(0.01).with_kernel_order(3).with_stop_ratio(None);
    let traj = integrate_flow(&params, &data, &cfg)?;
    let monotone = monotone_loss_check(&traj);
    let d = descent_identity_check(&traj)?.max_relative_deviation;
    let h = hierarchy_identity_check_order(&traj, 2)?.max_relative_deviation;
    Ok((if monotone.holds { 0.0 } else { monotone.worst }, d, h))
}

fn p2_closed_form() -> Result<f64> {
    let (params, data) = tiny(8, Activation::Tanh)?;
    let state = init_state(&params, &data, 2)?;
    let traj = integrate_truncated(&state, &data, &Schedule::new(1.0, 0.01))?;
    let exact = frozen_kernel_solution(&state.kernels[0].to_matrix()?, &state.outputs, data.labels(), 1.0)?;
    Ok(relative_error(&traj.last().expect("final state").outputs, &exact))
}

fn checkpoint_round_trip() -> Result<f64> {
    let (params, data) = tiny(6, Activation::Tanh)?;
    let state = init_state(&params, &data, 3)?;
    let text = write_checkpoint(&state);
    let back = read_checkpoint(&text, std::path::Path::new("<memory>"))?;
    Ok(if back.to_flat() == state.to_flat() && back.time == state.time { 0.0 } else { 1.0 })
}

/// Runs every check; each finishes in well under a second.
pub fn selftest() -> Vec<SelfCheck> {
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<f64>, tol: f64| {
        out.push(match r {
            Ok(v) => check(name, v, tol),
            Err(e) => failed(name, e),
        })
    };
    push("gradient_matches_finite_differences", gradient_vs_fd(), 1e-6);
    push("ntk_gram_matches_layerwise", ntk_routes(), 1e-12);
    push("k3_matches_finite_differences", k3_vs_fd(), 1e-4);
    match identities() {
        Ok((mono, d, h)) => {
            push("monotone_loss", Ok(mono), 0.0);
            push("descent_identity", Ok(d), 1e-4);
            push("hierarchy_identity_k2", Ok(h), 1e-3);
        }
        Err(e) => push("identities", Err(e), 0.0),
    }
    push("p2_matches_matrix_exponential", p2_closed_form(), 1e-8);
    push("checkpoint_round_trip", checkpoint_round_trip(), 0.0);
    out
}
