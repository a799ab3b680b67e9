//! Acceptance criteria 1 to 13. One PASS/FAIL line per criterion.
//!
//! The process exits 0 after reporting unless `ACCEPTANCE_STRICT` is set, in
//! which case any FAIL line makes it exit 1.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nthlab::cli::{dispatch, parse_config_str, Command};
use nthlab::flow::{hierarchy_identity_check_order, integrate_flow, monotone_loss_check, FlowConfig};
use nthlab::harness::{
    decay_experiment, drift_scaling_experiment, fit_loglog_slope, init_kernel_scaling_experiment,
    truncation_error_experiment, Experiment, ScalingReport, SweepConfig,
};
use nthlab::kernels::{kernel_fd_oracle, kernel_hierarchy, ntk_gram, ntk_layerwise, relative_error, FdStep};
use nthlab::network::{Activation, DataSet, NetworkConfig, NetworkParams};
use nthlab::nth::{
    frozen_kernel_solution, init_state, integrate_truncated, predict_new_point, taylor_discrete_step, Schedule,
};
use nthlab::numerics::{dot, RngStream};

type Outcome = Result<(bool, String), String>;

fn net(d: usize, m: usize, h: usize, act: Activation, seed: u64) -> Result<NetworkParams, String> {
    NetworkConfig::new(d, m, h).with_activation(act).with_seed(seed).init_params().map_err(|e| e.to_string())
}

fn data(n: usize, d: usize, seed: u64) -> Result<DataSet, String> {
    DataSet::synthetic(n, d, seed).map_err(|e| e.to_string())
}

fn activation(k: usize) -> Activation {
    [Activation::Tanh, Activation::softplus(1.5), Activation::Identity][k % 3]
}

fn c1_gradient() -> Outcome {
    let mut rng = RngStream::new(2024, 1);
    let mut pick = || 1 + (rng.uniform() * 8.0) as usize % 8;
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let (d, m, h) = (pick(), pick(), pick());
        let params = net(d, m, h, activation(k), k as u64)?;
        let x = data(1, d, 500 + k as u64)?.inputs()[0].clone();
        let out = |p: &NetworkParams| p.forward(&x).map(|t| t.output).map_err(|e| e.to_string());
        let grad = params.param_gradient(&params.forward(&x).map_err(|e| e.to_string())?);
        let theta = params.flatten();
        let step = 1e-5;
        let mut fd = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += step;
            dn[i] -= step;
            let fu = out(&params.with_flat(&up).map_err(|e| e.to_string())?)?;
            let fdn = out(&params.with_flat(&dn).map_err(|e| e.to_string())?)?;
            fd.push((fu - fdn) / (2.0 * step));
        }
        worst = worst.max(relative_error(&grad, &fd));
    }
    Ok((worst < 1e-6, format!("max relative error {worst:.3e} over 50 nets (< 1e-6)")))
}

fn c2_ntk() -> Outcome {
    let mut worst = 0.0_f64;
    for k in 0..20usize {
        let (d, m, h, n) = (1 + k % 8, 2 + (3 * k) % 15, 1 + k % 3, 1 + k % 5);
        let params = net(d, m, h, activation(k), 300 + k as u64)?;
        let ds = data(n, d, 300 + k as u64)?;
        let a = ntk_gram(&params, &ds).map_err(|e| e.to_string())?;
        let b = ntk_layerwise(&params, &ds).map_err(|e| e.to_string())?;
        worst = worst.max(relative_error(b.total.values(), a.values()));
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.3e} over 20 nets (<= 1e-12)")))
}

fn c3_hierarchy_oracle() -> Outcome {
    let params = net(4, 32, 2, Activation::Tanh, 31)?;
    let ds = data(3, 4, 31)?;
    let ks = kernel_hierarchy(&params, &ds, 4).map_err(|e| e.to_string())?;
    let k3_fd = kernel_fd_oracle(&params, &ds, 3, FdStep::Fixed(1e-4)).map_err(|e| e.to_string())?;
    let k4_fd = kernel_fd_oracle(&params, &ds, 4, FdStep::Auto).map_err(|e| e.to_string())?;
    let e3 = relative_error(ks[1].values(), k3_fd.values());
    let e4 = relative_error(ks[2].values(), k4_fd.values());

    let m = 32;
    let lin = net(3, m, 1, Activation::Identity, 33)?;
    let ds = data(3, 3, 33)?;
    let f = lin.outputs(&ds).map_err(|e| e.to_string())?;
    let k3 = &kernel_hierarchy(&lin, &ds, 3).map_err(|e| e.to_string())?[1];
    let xs = ds.inputs();
    let ip = |i: usize, j: usize| dot(&xs[i], &xs[j]);
    let mut closed = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                closed.push((2.0 * ip(i, j) * f[k] + ip(i, k) * f[j] + ip(j, k) * f[i]) / m as f64);
            }
        }
    }
    let el = relative_error(k3.values(), &closed);
    Ok((
        e3 < 1e-5 && e4 < 1e-3 && el < 1e-6,
        format!("K3 vs FD {e3:.3e} (< 1e-5), K4 vs FD {e4:.3e} (< 1e-3), identity closed form {el:.3e} (< 1e-6)"),
    ))
}

fn c4_c5_flow() -> Result<(Outcome, Outcome), String> {
    let params = net(8, 64, 2, Activation::Tanh, 41)?;
    let ds = data(4, 8, 41)?;
    let cfg = FlowConfig::new(0.5, 1e-3).with_snapshot_every(0.01).with_kernel_order(4).with_stop_ratio(None);
    let traj = integrate_flow(&params, &ds, &cfg).map_err(|e| e.to_string())?;
    let k2 = hierarchy_identity_check_order(&traj, 2).map_err(|e| e.to_string())?.max_relative_deviation;
    let k3 = hierarchy_identity_check_order(&traj, 3).map_err(|e| e.to_string())?.max_relative_deviation;
    let c4 = Ok((
        k2 < 1e-3 && k3 < 1e-2,
        format!("dK2/dt deviation {k2:.3e} (< 1e-3), dK3/dt deviation {k3:.3e} (< 1e-2), m = 64"),
    ));

    let cfg = FlowConfig::new(10.0, 0.05).with_snapshot_every(0.05).with_stop_ratio(None);
    let traj = integrate_flow(&params, &ds, &cfg).map_err(|e| e.to_string())?;
    let mono = monotone_loss_check(&traj);
    let c5 = Ok((
        mono.holds,
        format!(
            "largest loss increase {:.3e} over {} snapshots (slack {:.3e})",
            mono.worst,
            traj.snapshots.len(),
            mono.bound
        ),
    ));
    Ok((c4, c5))
}

fn fast_sweep() -> SweepConfig {
    SweepConfig { dt: 0.05, ..SweepConfig::default() }
}

fn report_line(report: &ScalingReport, names: &[&str]) -> (bool, String) {
    let mut passed = true;
    let mut parts = Vec::new();
    for name in names {
        match report.check(name) {
            Some(c) => {
                passed &= c.passed;
                parts.push(format!(
                    "{name} {:.3} {} {}",
                    c.measured,
                    if c.passed { "in" } else { "outside" },
                    c.expected
                ));
            }
            None => {
                passed = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    (passed, parts.join("; "))
}

fn c6_drift() -> Outcome {
    let report = drift_scaling_experiment(&fast_sweep()).map_err(|e| e.to_string())?;
    Ok(report_line(&report, &["drift_slope", "dt_audit"]))
}

fn c7_init() -> Outcome {
    let report = init_kernel_scaling_experiment(&fast_sweep()).map_err(|e| e.to_string())?;
    Ok(report_line(&report, &["k3_norm_slope", "k4_norm_slope", "k2_seed_std_decreasing"]))
}

fn c8_truncation() -> Outcome {
    let cfg = SweepConfig { widths: vec![64, 128, 256, 512], orders: vec![2, 3], ..fast_sweep() };
    let report = truncation_error_experiment(&cfg).map_err(|e| e.to_string())?;
    Ok(report_line(
        &report,
        &[
            "delta_f_p2_slope",
            "kernel_err_p2_slope",
            "delta_f_p3_slope",
            "kernel_err_p3_slope",
            "delta_f_zero_at_start",
        ],
    ))
}

fn c8_supplement() -> Result<String, String> {
    let cfg = SweepConfig { widths: vec![64, 128, 256, 512], orders: vec![4], ..fast_sweep() };
    let report = truncation_error_experiment(&cfg).map_err(|e| e.to_string())?;
    let slope = |q: &str| report.fit(q).and_then(|f| f.fit).map_or(f64::NAN, |f| f.slope);
    Ok(format!("p = 4: delta_f slope {:.3}, kernel slope {:.3}", slope("delta_f_p4"), slope("kernel_err_p4")))
}

fn c9_closed_form() -> Outcome {
    let params = net(8, 64, 2, Activation::Tanh, 91)?;
    let ds = data(4, 8, 91)?;
    let state = init_state(&params, &ds, 2).map_err(|e| e.to_string())?;
    let traj = integrate_truncated(&state, &ds, &Schedule::new(2.0, 0.005).with_snapshot_every(0.25))
        .map_err(|e| e.to_string())?;
    let k = state.kernels[0].to_matrix().map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for s in &traj {
        let exact = frozen_kernel_solution(&k, &state.outputs, ds.labels(), s.time).map_err(|e| e.to_string())?;
        worst = worst.max(relative_error(&s.outputs, &exact));
    }
    Ok((worst < 1e-8, format!("max relative deviation {worst:.3e} over {} snapshots (< 1e-8)", traj.len())))
}

fn c10_decay() -> Outcome {
    let cfg = SweepConfig { widths: vec![512], n: 2, experiments: vec![Experiment::Decay], ..fast_sweep() };
    let report = decay_experiment(&cfg).map_err(|e| e.to_string())?;
    let (passed, mut line) = report_line(&report, &["decay_bound"]);
    let times = report.medians("time_to_100x");
    let predicted = report.medians("predicted_time_to_100x");
    if let (Some(t), Some(p)) = (times.first(), predicted.first()) {
        line.push_str(&format!("; median time to 100x {:.2} against (2n/lambda) ln(100n) = {:.2}", t.1, p.1));
    }
    Ok((passed, line))
}

fn c11_taylor() -> Outcome {
    let params = net(8, 64, 2, Activation::Tanh, 111)?;
    let ds = data(4, 8, 111)?;
    let etas = [1e-2, 5e-3, 2.5e-3];
    let mut passed = true;
    let mut parts = Vec::new();
    for p in [3usize, 4] {
        let mut pts = Vec::new();
        for &eta in &etas {
            let step = taylor_discrete_step(&params, &ds, eta, p).map_err(|e| e.to_string())?;
            pts.push((eta, step.relative_error));
        }
        let slope = fit_loglog_slope(&pts).map_err(|e| e.to_string())?.slope;
        let target = p as f64 - 1.0;
        passed &= (slope - target).abs() <= 0.3;
        parts.push(format!("p = {p}: slope {slope:.3} (target {target} +/- 0.3)"));
    }
    Ok((passed, parts.join("; ")))
}

fn c12_prediction() -> Outcome {
    let params = net(8, 64, 2, Activation::Tanh, 121)?;
    let ds = data(4, 8, 121)?;
    let mut worst = 0.0_f64;
    for p in [2usize, 3] {
        for i in 0..ds.n() {
            let x = ds.inputs()[i].clone();
            let run = predict_new_point(&params, &ds, &x, p, &Schedule::new(1.0, 0.01).with_snapshot_every(0.1))
                .map_err(|e| e.to_string())?;
            for (t, s) in run.train.iter().zip(&run.new_point) {
                worst = worst.max((t.outputs[i] - s.output).abs());
            }
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.3e} over every training point, p = 2, 3 (< 1e-10)")))
}

fn csv_files(dir: &Path, out: &mut BTreeMap<String, Vec<u8>>, root: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            csv_files(&path, out, root)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            let key = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
            out.insert(key, fs::read(&path)?);
        }
    }
    Ok(())
}

fn c13_reproducibility() -> Outcome {
    let text = "n = 3\nd = 4\nm = 48\nseed = 5\nt_end = 1\ndt = 0.05\nsnapshot_every = 0.25\n\
                widths = 32, 64, 128\nseeds = 0, 1\nexperiment = init_kernel_scaling, truncation_error\n\
                x_new = 0.5, 0.5, 0.5, 0.5\n";
    let cfg = parse_config_str(text, Path::new("acceptance.cfg")).map_err(|e| e.to_string())?;
    let commands = [Command::Flow, Command::Kernels, Command::Truncated, Command::Compare, Command::Scaling];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for c in commands {
            dispatch(c, &cfg, dir.path()).map_err(|e| e.to_string())?;
        }
        let mut files = BTreeMap::new();
        csv_files(dir.path(), &mut files, dir.path()).map_err(|e| e.to_string())?;
        runs.push(files);
    }
    let differing: Vec<&String> = runs[0].iter().filter(|(k, v)| runs[1].get(*k) != Some(v)).map(|(k, _)| k).collect();
    let same_set = runs[0].len() == runs[1].len();
    Ok((
        same_set && differing.is_empty() && !runs[0].is_empty(),
        format!("{} CSV files over {} commands, {} differing", runs[0].len(), commands.len(), differing.len()),
    ))
}

fn main() {
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        results.push((id, name, outcome, start.elapsed().as_secs_f64()));
        let (id, name, outcome, secs) = results.last().unwrap();
        match outcome {
            Ok((passed, detail)) => {
                println!("{} {id:>2} {name}: {detail} [{secs:.1} s]", if *passed { "PASS" } else { "FAIL" })
            }
            Err(e) => println!("FAIL {id:>2} {name}: error: {e} [{secs:.1} s]"),
        }
    };
    run(1, "gradient_correctness", &c1_gradient);
    run(2, "ntk_identity", &c2_ntk);
    run(3, "hierarchy_vs_oracle", &c3_hierarchy_oracle);
    let start = Instant::now();
    let (c4, c5) = match c4_c5_flow() {
        Ok(pair) => pair,
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let shared = start.elapsed().as_secs_f64();
    run(4, "nth_self_consistency", &|| c4.clone());
    run(5, "monotone_loss", &|| c5.clone());
    run(6, "kernel_drift_scaling", &c6_drift);
    run(7, "initial_kernel_scaling", &c7_init);
    run(8, "truncation_error_scaling", &c8_truncation);
    match c8_supplement() {
        Ok(s) => println!("INFO  8 truncation_error_scaling: {s}"),
        Err(e) => println!("INFO  8 truncation_error_scaling: p = 4 supplement failed: {e}"),
    }
    run(9, "p2_closed_form", &c9_closed_form);
    run(10, "exponential_decay", &c10_decay);
    run(11, "taylor_step_order", &c11_taylor);
    run(12, "prediction_consistency", &c12_prediction);
    run(13, "reproducibility", &c13_reproducibility);
    println!("INFO  criteria 4 and 5 share one flow run of {shared:.1} s");

    let failed: Vec<usize> =
        results.iter().filter(|(_, _, o, _)| !matches!(o, Ok((true, _)))).map(|(id, _, _, _)| *id).collect();
    println!("acceptance: {} of {} passed; failing: {:?}", results.len() - failed.len(), results.len(), failed);
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
