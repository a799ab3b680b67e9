//! `nthlab <command> --config <path> [--out <dir>] [--threads N] [--seed-override S]`

mod config;
mod selftest;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    descent_identity_check, hierarchy_identity_check, instantaneous_decay_check, integrate_flow, monotone_loss_check,
    norm_stability_check, FlowConfig,
};
use crate::harness::{run_experiment, Experiment};
use crate::kernels::{kernel_hierarchy, ntk_gram, ntk_layerwise, relative_error};
use crate::nth::{
    init_state, integrate_truncated, predict_new_point, save_checkpoint, taylor_discrete_step_with, TaylorCoefficients,
};
use crate::numerics::{min_eigenvalue_sym, norm2};

pub use config::{parse_config, parse_config_str, RunConfig, KEYS};
pub use selftest::{selftest, SelfCheck};

/// Exit status for a run whose checks all passed.
pub const EXIT_OK: i32 = 0;
/// A check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Bad command line, config or data.
pub const EXIT_USAGE: i32 = 2;
/// The integration stopped producing finite numbers.
pub const EXIT_DIVERGED: i32 = 3;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "NTHLAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Exact gradient flow with observers and identity checks.
    Flow,
    /// Kernel hierarchy at initialization.
    Kernels,
    /// Truncated hierarchy, optionally with a new-point prediction.
    Truncated,
    /// Exact flow against truncations, plus discrete Taylor steps.
    Compare,
    /// Width sweeps with slope fits.
    Scaling,
    /// Exponential loss decay against the eigenvalue bound.
    Decay,
    /// Invariant suite on tiny networks.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Kernels => "kernels",
            Command::Truncated => "truncated",
            Command::Compare => "compare",
            Command::Scaling => "scaling",
            Command::Decay => "decay",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nthlab", version, about = "Finite-width kernel hierarchy laboratory")]
pub struct Cli {
    pub command: Command,
    /// Run configuration (`key = value` lines); optional for `selftest`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root; defaults to $NTHLAB_OUT, then `nthlab-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps and kernel evaluation.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replaces `seed` and shifts `seeds` to start here.
    #[arg(long)]
    pub seed_override: Option<u64>,
}

/// Written to `manifest.json` before and after the run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub command: Command,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub exit_code: Option<i32>,
    pub config: RunConfig,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Directory of one run: `<root>/<hash prefix>-<command>`.
pub fn run_dir(root: &Path, cfg: &RunConfig, command: Command) -> PathBuf {
    root.join(format!("{}-{}", &cfg.hash()[..12], command.name()))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run_cli(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Io(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Runs a parsed command line and returns the exit code for a completed
/// run; errors before or during the run are returned as `Err`.
pub fn run_cli(cli: &Cli) -> Result<i32> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), _) => parse_config(path)?,
        (None, Command::Selftest) => RunConfig::default(),
        (None, _) => return Err(Error::invalid("--config is required for this command")),
    };
    if let Some(s) = cli.seed_override {
        cfg.override_seed(s);
    }
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nthlab-out"));
    let outcome = match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(cli.command, &cfg, &root))
        }
        None => dispatch(cli.command, &cfg, &root),
    }?;
    print!("{}", outcome.summary);
    let status = if outcome.exit_code == EXIT_OK { "PASS" } else { "FAIL" };
    println!("{}: {status} ({})", cli.command.name(), outcome.dir.display());
    Ok(outcome.exit_code)
}

/// Result of one dispatched command.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub dir: PathBuf,
    /// Check lines, as written to the run's check or verdict files.
    pub summary: String,
}

/// Runs `command` under `cfg`, writing the manifest and results below `root`.
pub fn dispatch(command: Command, cfg: &RunConfig, root: &Path) -> Result<RunOutcome> {
    let dir = run_dir(root, cfg, command);
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest {
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        started_unix: now(),
        finished_unix: None,
        exit_code: None,
        config: cfg.clone(),
        outputs: Vec::new(),
    };
    manifest.write(&dir)?;
    let outcome = execute(command, cfg, &dir);
    let code = match &outcome {
        Ok((passed, _, _)) => {
            if *passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => exit_code_for(e),
    };
    if let Ok((_, files, _)) = &outcome {
        manifest.outputs =
            files.iter().map(|f| f.strip_prefix(&dir).unwrap_or(f).to_string_lossy().replace('\\', "/")).collect();
    }
    manifest.finished_unix = Some(now());
    manifest.exit_code = Some(code);
    manifest.write(&dir)?;
    let (_, _, summary) = outcome?;
    Ok(RunOutcome { exit_code: code, dir, summary })
}

type Outcome = (bool, Vec<PathBuf>, String);

fn execute(command: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    match command {
        Command::Flow => run_flow(cfg, dir),
        Command::Kernels => run_kernels(cfg, dir),
        Command::Truncated => run_truncated(cfg, dir),
        Command::Compare => run_compare(cfg, dir),
        Command::Scaling => {
            let experiments = cfg.experiment.clone().unwrap_or_else(|| {
                vec![Experiment::DriftScaling, Experiment::InitKernelScaling, Experiment::TruncationError]
            });
            run_sweeps(cfg, cfg.sweep(experiments, cfg.widths.clone()), dir)
        }
        Command::Decay => run_sweeps(cfg, cfg.sweep(vec![Experiment::Decay], vec![cfg.m]), dir),
        Command::Selftest => {
            let checks = selftest();
            let mut text = String::new();
            for c in &checks {
                let _ = writeln!(text, "{} {}: {}", verdict(c.passed), c.name, c.detail);
            }
            let path = dir.join("selftest.txt");
            fs::write(&path, &text)?;
            Ok((checks.iter().all(|c| c.passed), vec![path], text))
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write(dir: &Path, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    files.push(path);
    Ok(())
}

fn run_flow(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = cfg.network(cfg.m, cfg.seed).init_params()?;
    let data = cfg.dataset()?;
    let traj = integrate_flow(&params, &data, &cfg.flow_config())?;
    let mut files = traj.write_csv(dir)?;
    let monotone = monotone_loss_check(&traj);
    let mut text = format!(
        "{} monotone_loss: worst increase {:e}, slack {:e}\n",
        verdict(monotone.holds),
        monotone.worst,
        monotone.bound
    );
    if traj.snapshots.len() >= 3 && cfg.kernel_order >= 2 {
        let d = descent_identity_check(&traj)?;
        let _ = writeln!(text, "INFO descent_identity: max relative deviation {:e}", d.max_relative_deviation);
        if cfg.kernel_order >= 3 {
            for r in hierarchy_identity_check(&traj)? {
                let _ = writeln!(
                    text,
                    "INFO hierarchy_identity_k{}: max relative deviation {:e}",
                    r.order, r.max_relative_deviation
                );
            }
        }
    }
    if traj.snapshots.len() >= 3 && cfg.observe_lambda_min {
        let decay = instantaneous_decay_check(&traj, 1e-3)?;
        for r in [decay.factor_two, decay.printed] {
            let _ = writeln!(
                text,
                "INFO {}: worst margin {:e} ({})",
                r.name,
                r.worst,
                if r.holds { "holds" } else { "violated" }
            );
        }
    }
    if cfg.observe_norms {
        let r = norm_stability_check(&traj)?;
        let _ = writeln!(
            text,
            "INFO norm_stability: worst ratio {:e} ({})",
            r.worst,
            if r.holds { "within 2x" } else { "outside 2x" }
        );
    }
    write(dir, "flow_checks.txt", &text, &mut files)?;
    Ok((monotone.holds, files, text))
}

fn run_kernels(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = cfg.network(cfg.m, cfg.seed).init_params()?;
    let data = cfg.dataset()?;
    let ks = kernel_hierarchy(&params, &data, cfg.p)?;
    let mut files = Vec::new();
    for k in &ks {
        write(dir, &format!("k{}.csv", k.order()), &k.to_csv_string(), &mut files)?;
    }
    let gram = ntk_gram(&params, &data)?;
    let layerwise = ntk_layerwise(&params, &data)?;
    let ntk_err = relative_error(layerwise.total.values(), gram.values());
    let lambda = min_eigenvalue_sym(&gram.to_matrix()?)?;
    let mut passed = ntk_err <= 1e-12;
    let mut text = format!(
        "{} ntk_layerwise: relative error {ntk_err:e}\nINFO lambda_min: {lambda:e}\n",
        verdict(ntk_err <= 1e-12)
    );
    for k in &ks {
        let asym = k.first_pair_asymmetry();
        passed &= asym == 0.0;
        let _ = writeln!(
            text,
            "{} k{}_first_pair_symmetry: {asym:e}; sup norm {:e}",
            verdict(asym == 0.0),
            k.order(),
            k.max_abs()
        );
    }
    let mut contrib = String::from("layer");
    for i in 0..data.n() {
        for j in 0..data.n() {
            let _ = write!(contrib, ",g_{}_{}", i + 1, j + 1);
        }
    }
    contrib.push('\n');
    for (l, g) in layerwise.contributions.iter().enumerate() {
        let _ = write!(contrib, "{}", l + 1);
        for v in g.as_slice() {
            let _ = write!(contrib, ",{v:e}");
        }
        contrib.push('\n');
    }
    write(dir, "ntk_layers.csv", &contrib, &mut files)?;
    write(dir, "kernels_summary.txt", &text, &mut files)?;
    Ok((passed, files, text))
}

fn run_truncated(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = cfg.network(cfg.m, cfg.seed).init_params()?;
    let data = cfg.dataset()?;
    let schedule = cfg.schedule(2.0);
    let state = init_state(&params, &data, cfg.p)?;
    let traj = integrate_truncated(&state, &data, &schedule)?;
    let mut files = Vec::new();
    let mut csv = String::from("time,loss");
    for i in 1..=data.n() {
        let _ = write!(csv, ",f_{i}");
    }
    csv.push('\n');
    for s in &traj {
        let loss =
            s.outputs.iter().zip(data.labels()).map(|(f, y)| (f - y) * (f - y)).sum::<f64>() * 0.5 / data.n() as f64;
        let _ = write!(csv, "{:e},{loss:e}", s.time);
        for f in &s.outputs {
            let _ = write!(csv, ",{f:e}");
        }
        csv.push('\n');
    }
    write(dir, "truncated.csv", &csv, &mut files)?;
    let last = traj.last().expect("at least the initial snapshot");
    let ck = dir.join("state_final.csv");
    save_checkpoint(last, &ck)?;
    files.push(ck);
    let frozen = traj.iter().all(|s| s.kernels.last() == state.kernels.last());
    let mut text = format!("{} top_kernel_frozen\n", verdict(frozen));
    if let Some(x) = &cfg.x_new {
        let run = predict_new_point(&params, &data, x, cfg.p, &schedule)?;
        let mut pred = String::from("time,f_x\n");
        for s in &run.new_point {
            let _ = writeln!(pred, "{:e},{:e}", s.time, s.output);
        }
        write(dir, "prediction.csv", &pred, &mut files)?;
        let _ = writeln!(text, "INFO prediction: f_x(t_end) = {:e}", run.final_output().unwrap_or(f64::NAN));
    }
    write(dir, "truncated_checks.txt", &text, &mut files)?;
    Ok((frozen, files, text))
}

fn run_compare(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let params = cfg.network(cfg.m, cfg.seed).init_params()?;
    let data = cfg.dataset()?;
    let schedule = cfg.schedule(2.0);
    let flow_cfg = FlowConfig::new(schedule.t_end, schedule.dt)
        .with_snapshot_times(schedule.snapshot_times.clone())
        .with_kernel_order(2)
        .with_norms(false)
        .with_lambda_min(false)
        .with_stop_ratio(None);
    let exact = integrate_flow(&params, &data, &flow_cfg)?;
    let mut columns = Vec::new();
    for &p in &cfg.orders {
        let truncated = integrate_truncated(&init_state(&params, &data, p)?, &data, &schedule)?;
        let mut df = Vec::new();
        let mut dk = Vec::new();
        for (e, t) in exact.snapshots.iter().zip(&truncated) {
            let diff: Vec<f64> = e.outputs.iter().zip(&t.outputs).map(|(a, b)| a - b).collect();
            df.push(norm2(&diff));
            dk.push(
                e.kernels[0].values().iter().zip(t.kernels[0].values()).fold(0.0_f64, |w, (a, b)| w.max((a - b).abs())),
            );
        }
        columns.push((p, df, dk));
    }
    let mut csv = String::from("time");
    for (p, _, _) in &columns {
        let _ = write!(csv, ",delta_f_p{p},kernel_err_p{p}");
    }
    csv.push('\n');
    for (k, s) in exact.snapshots.iter().enumerate() {
        let _ = write!(csv, "{:e}", s.time);
        for (_, df, dk) in &columns {
            let _ = write!(csv, ",{:e},{:e}", df[k], dk[k]);
        }
        csv.push('\n');
    }
    let mut files = Vec::new();
    write(dir, "compare.csv", &csv, &mut files)?;
    let start_ok = columns.iter().all(|(_, df, _)| df[0] == 0.0);
    let mut text = format!("{} delta_f_zero_at_start\n", verdict(start_ok));
    if cfg.p >= 3 {
        let mut taylor = String::from("eta,p,coefficients,relative_error\n");
        for &eta in &cfg.eta {
            for (coef, name) in [(TaylorCoefficients::Derived, "derived"), (TaylorCoefficients::Printed, "printed")] {
                let step = taylor_discrete_step_with(&params, &data, eta, cfg.p, coef)?;
                let _ = writeln!(taylor, "{eta:e},{},{name},{:e}", cfg.p, step.relative_error);
            }
        }
        write(dir, "taylor.csv", &taylor, &mut files)?;
        let _ = writeln!(text, "INFO taylor: {} step sizes at p = {}", cfg.eta.len(), cfg.p);
    }
    write(dir, "compare_checks.txt", &text, &mut files)?;
    Ok((start_ok, files, text))
}

fn run_sweeps(_cfg: &RunConfig, sweep: crate::harness::SweepConfig, dir: &Path) -> Result<Outcome> {
    sweep.validate()?;
    let mut files = Vec::new();
    let mut passed = true;
    let mut text = String::new();
    for &e in &sweep.experiments {
        let report = run_experiment(&sweep, e)?;
        passed &= report.passed();
        text.push_str(&report.verdict_text());
        files.extend(report.write(dir)?);
    }
    Ok((passed, files, text))
}
