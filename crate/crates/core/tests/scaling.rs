use nthlab::flow::{integrate_flow, kernel_drift, FlowConfig};
use nthlab::harness::{
    decay_experiment, decay_run, drift_scaling_experiment, truncation_error_experiment, Experiment, SweepConfig,
};
use nthlab::kernels::kernel_hierarchy;
use nthlab::network::{Activation, DataSet, NetworkConfig, NetworkParams};
use nthlab::nth::{predict_new_point, Schedule};
use nthlab::{harness::median, Error};

fn net(d: usize, m: usize, seed: u64) -> NetworkParams {
    NetworkConfig::new(d, m, 2).with_activation(Activation::Tanh).with_seed(seed).init_params().unwrap()
}

fn small(experiment: Experiment) -> SweepConfig {
    SweepConfig {
        widths: vec![16, 32, 64],
        seeds: vec![0, 1],
        n: 3,
        d: 4,
        t_end: 0.5,
        dt: 0.05,
        experiments: vec![experiment],
        ..SweepConfig::default()
    }
}

#[test]
fn single_width_is_refused() {
    let cfg = SweepConfig { widths: vec![64], ..small(Experiment::DriftScaling) };
    assert!(matches!(drift_scaling_experiment(&cfg), Err(Error::Config { field, .. }) if field == "widths"));
}

#[test]
fn zero_horizon_gives_zero_drift_and_a_degenerate_fit() {
    let cfg = SweepConfig { t_end: 0.0, ..small(Experiment::DriftScaling) };
    let report = drift_scaling_experiment(&cfg).unwrap();
    assert!(report.raw.iter().filter(|r| r.quantity == "drift").all(|r| r.value == 0.0));
    let fit = report.fit("drift").unwrap();
    assert!(fit.fit.is_none());
    assert!(fit.note.as_deref().unwrap().starts_with("degenerate"));
    assert!(!report.check("drift_slope").unwrap().passed);
}

#[test]
fn drift_halves_roughly_when_width_doubles() {
    let data = DataSet::synthetic(4, 8, 0).unwrap();
    let cfg = FlowConfig::new(2.0, 0.05)
        .with_snapshot_every(0.25)
        .with_norms(false)
        .with_lambda_min(false)
        .with_stop_ratio(None);
    let drift = |m: usize| {
        let per_seed: Vec<f64> =
            (0..5).map(|s| kernel_drift(&integrate_flow(&net(8, m, s), &data, &cfg).unwrap()).unwrap()).collect();
        median(&per_seed).unwrap()
    };
    let ratio = drift(256) / drift(512);
    assert!((1.4..=2.8).contains(&ratio), "drift ratio {ratio}");
}

#[test]
fn odd_kernel_is_small_against_the_ntk_at_width_512() {
    let data = DataSet::synthetic(4, 8, 0).unwrap();
    let ks = kernel_hierarchy(&net(8, 512, 0), &data, 3).unwrap();
    let ratio = ks[1].max_abs() / ks[0].max_abs();
    assert!(ratio < 0.1, "{ratio}");
}

#[test]
fn truncated_prediction_improves_with_width() {
    let data = DataSet::synthetic(3, 4, 0).unwrap();
    let x = vec![0.5, -0.5, 0.5, 0.5];
    let schedule = Schedule::new(1.0, 0.02);
    let err = |m: usize| {
        let params = net(4, m, 1);
        let exact = integrate_flow(
            &params,
            &data,
            &FlowConfig::new(1.0, 0.02).with_kernel_order(0).with_stop_ratio(None).with_params(true),
        )
        .unwrap();
        let trained = params.with_flat(&exact.final_params).unwrap();
        let f_exact = trained.forward(&x).unwrap().output;
        (predict_new_point(&params, &data, &x, 2, &schedule).unwrap().final_output().unwrap() - f_exact).abs()
    };
    assert!(err(256) < err(32));
}

#[test]
fn truncation_starts_exactly_aligned() {
    let report = truncation_error_experiment(&small(Experiment::TruncationError)).unwrap();
    assert!(report.check("delta_f_zero_at_start").unwrap().passed);
    assert!(report.raw.iter().any(|r| r.quantity == "kernel_err_p3"));
    assert!(report.check("dt_audit").is_some());
}

#[test]
fn fitted_start_has_trivial_decay() {
    let params = net(3, 32, 0);
    let data = DataSet::synthetic(2, 3, 0).unwrap();
    let fitted = data.clone().with_labels(params.outputs(&data).unwrap()).unwrap();
    let run = decay_run(&params, &fitted, 5.0, 0.05, 0.5).unwrap();
    assert_eq!(run.initial_loss, 0.0);
    assert_eq!(run.worst_bound_ratio, 0.0);
    assert_eq!(run.time_to_100x, Some(0.0));
}

#[test]
fn repeated_inputs_abort_the_decay_run() {
    let x = vec![0.6, 0.8, 0.0];
    let data = DataSet::new(vec![x.clone(), x], vec![0.3, -0.2]).unwrap();
    let err = decay_run(&net(3, 16, 0), &data, 5.0, 0.05, 0.5).unwrap_err();
    assert!(err.to_string().contains("lambda_min"), "{err}");
}

#[test]
fn wide_two_point_decay_beats_the_predicted_time() {
    let cfg = SweepConfig {
        widths: vec![512],
        seeds: vec![0, 1],
        n: 2,
        dt: 0.05,
        experiments: vec![Experiment::Decay],
        ..SweepConfig::default()
    };
    let report = decay_experiment(&cfg).unwrap();
    assert!(report.check("decay_bound").unwrap().passed);
    for seed in 0..2 {
        let t = report.raw.iter().find(|r| r.quantity == "time_to_100x" && r.seed == seed).unwrap().value;
        let p = report.raw.iter().find(|r| r.quantity == "predicted_time_to_100x" && r.seed == seed).unwrap().value;
        assert!(t.is_finite() && t <= p, "seed {seed}: {t} vs {p}");
    }
}

#[test]
fn narrow_decay_run_is_flagged() {
    let cfg = SweepConfig {
        widths: vec![64],
        seeds: vec![0],
        n: 2,
        dt: 0.05,
        experiments: vec![Experiment::Decay],
        ..SweepConfig::default()
    };
    let report = decay_experiment(&cfg).unwrap();
    assert!(report.notes.iter().any(|n| n.contains("below 256")));
}

#[test]
fn reports_round_trip_to_disk() {
    let report = drift_scaling_experiment(&small(Experiment::DriftScaling)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = report.write(dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let raw = std::fs::read_to_string(dir.path().join("drift_scaling_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 3 * 2);
    let verdict = std::fs::read_to_string(dir.path().join("drift_scaling_verdict.txt")).unwrap();
    assert!(verdict.contains("drift_slope"));
    assert!(verdict.trim_end().ends_with("PASS") || verdict.trim_end().ends_with("FAIL"));
}
