//! `key = value` run configuration.
//!
//! ```text
//! # comment
//! n = 4
//! widths = 64, 128, 256
//! activation = softplus:2
//! ```
//!
//! List values are comma separated and may be wrapped in `[ ]`. Unknown
//! and repeated keys are rejected with their line number.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::harness::{Experiment, SweepConfig};
use crate::network::{Activation, DataSet, InputAssumptions, NetworkConfig};
use crate::nth::{Schedule, TaylorCoefficients};

/// Every setting any command reads, with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "H")]
    pub depth: usize,
    pub m: usize,
    pub seed: u64,
    pub activation: Activation,
    pub sigma_w: f64,
    pub sigma_a: f64,
    pub data_seed: u64,
    /// CSV training set; overrides the synthetic one.
    pub data: Option<PathBuf>,
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub experiment: Option<Vec<Experiment>>,
    /// `None` lets each command pick its own horizon.
    pub t_end: Option<f64>,
    pub dt: f64,
    pub snapshot_every: f64,
    pub kernel_order: usize,
    pub observe_norms: bool,
    pub observe_lambda_min: bool,
    pub keep_params: bool,
    pub stop_ratio: Option<f64>,
    pub p: usize,
    pub orders: Vec<usize>,
    pub x_new: Option<Vec<f64>>,
    pub eta: Vec<f64>,
    pub taylor_coefficients: TaylorCoefficients,
    pub decay_t_end: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        RunConfig {
            n: 4,
            d: 8,
            depth: 2,
            m: 256,
            seed: 0,
            activation: Activation::Tanh,
            sigma_w: 1.0,
            sigma_a: 1.0,
            data_seed: 0,
            data: None,
            widths: sweep.widths,
            seeds: sweep.seeds,
            experiment: None,
            t_end: None,
            dt: sweep.dt,
            snapshot_every: sweep.snapshot_every,
            kernel_order: 3,
            observe_norms: true,
            observe_lambda_min: true,
            keep_params: false,
            stop_ratio: Some(100.0),
            p: 3,
            orders: sweep.orders,
            x_new: None,
            eta: vec![1e-2, 5e-3, 2.5e-3],
            taylor_coefficients: TaylorCoefficients::Derived,
            decay_t_end: sweep.decay_t_end,
        }
    }
}

/// Recognized keys, in documentation order.
pub const KEYS: &[&str] = &[
    "n",
    "d",
    "H",
    "m",
    "seed",
    "activation",
    "sigma_w",
    "sigma_a",
    "data_seed",
    "data",
    "widths",
    "seeds",
    "experiment",
    "t_end",
    "dt",
    "snapshot_every",
    "kernel_order",
    "observe_norms",
    "observe_lambda_min",
    "keep_params",
    "stop_ratio",
    "p",
    "orders",
    "x_new",
    "eta",
    "taylor_coefficients",
    "decay_t_end",
];

impl RunConfig {
    pub fn network(&self, m: usize, seed: u64) -> NetworkConfig {
        NetworkConfig {
            activation: self.activation,
            sigma_w: self.sigma_w,
            sigma_a: self.sigma_a,
            seed,
            ..NetworkConfig::new(self.d, m, self.depth)
        }
    }

    /// The CSV training set if `data` is set, the synthetic one otherwise.
    pub fn dataset(&self) -> Result<DataSet> {
        let rules = InputAssumptions::default();
        let data = match &self.data {
            Some(path) => DataSet::from_csv(path, &rules)?,
            None => DataSet::synthetic(self.n, self.d, self.data_seed)?,
        };
        if data.n() != self.n || data.d() != self.d {
            return Err(Error::Config {
                field: "data".into(),
                msg: format!("file has n = {}, d = {}; config says n = {}, d = {}", data.n(), data.d(), self.n, self.d),
            });
        }
        data.validate(&rules)?;
        Ok(data)
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig::new(self.t_end.unwrap_or(50.0), self.dt)
            .with_snapshot_every(self.snapshot_every)
            .with_kernel_order(self.kernel_order)
            .with_norms(self.observe_norms)
            .with_lambda_min(self.observe_lambda_min)
            .with_params(self.keep_params)
            .with_stop_ratio(self.stop_ratio)
    }

    pub fn schedule(&self, default_t_end: f64) -> Schedule {
        Schedule::new(self.t_end.unwrap_or(default_t_end), self.dt).with_snapshot_every(self.snapshot_every)
    }

    pub fn sweep(&self, experiments: Vec<Experiment>, widths: Vec<usize>) -> SweepConfig {
        SweepConfig {
            widths,
            seeds: self.seeds.clone(),
            n: self.n,
            d: self.d,
            depth: self.depth,
            activation: self.activation,
            sigma_w: self.sigma_w,
            sigma_a: self.sigma_a,
            orders: self.orders.clone(),
            t_end: self.t_end.unwrap_or(2.0),
            dt: self.dt,
            snapshot_every: self.snapshot_every,
            decay_t_end: self.decay_t_end,
            data_seed: self.data_seed,
            experiments,
        }
    }

    /// Replaces `seed` with `s` and shifts `seeds` to start at `s`.
    pub fn override_seed(&mut self, s: u64) {
        self.seed = s;
        self.seeds = (0..self.seeds.len() as u64).map(|k| s.wrapping_add(k)).collect();
    }

    /// SHA-256 of the canonical JSON form, whose keys are sorted.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Field constraints that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, msg: String| Err(Error::Config { field: f.into(), msg });
        for (name, v) in [("n", self.n), ("d", self.d), ("H", self.depth), ("m", self.m)] {
            if v == 0 {
                return field(name, "must be positive".into());
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return field("dt", format!("must be positive, got {}", self.dt));
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return field("t_end", format!("must be non-negative, got {t}"));
            }
        }
        if !(self.snapshot_every > 0.0) {
            return field("snapshot_every", format!("must be positive, got {}", self.snapshot_every));
        }
        if self.kernel_order == 1 || self.kernel_order > crate::kernels::MAX_KERNEL_ORDER {
            return field("kernel_order", format!("must be 0 or in 2..={}", crate::kernels::MAX_KERNEL_ORDER));
        }
        if !(2..=crate::kernels::MAX_KERNEL_ORDER).contains(&self.p) {
            return field("p", format!("must be in 2..={}", crate::kernels::MAX_KERNEL_ORDER));
        }
        if let Some(r) = self.stop_ratio {
            if !(r > 1.0) {
                return field("stop_ratio", format!("must exceed 1, got {r}"));
            }
        }
        if self.eta.iter().any(|&e| !(e > 0.0)) {
            return field("eta", "every step size must be positive".into());
        }
        if let Some(x) = &self.x_new {
            if x.len() != self.d {
                return field("x_new", format!("has {} entries, expected d = {}", x.len(), self.d));
            }
        }
        if let Some(exps) = &self.experiment {
            self.sweep(exps.clone(), self.widths.clone()).validate()?;
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse { path: path.into(), line: 0, msg: e.to_string() })?;
    parse_config_str(&text, path)
}

/// Parses config text; `origin` labels error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunConfig> {
    let fail = |line: usize, msg: String| Error::Parse { path: origin.into(), line, msg };
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) =
            content.split_once('=').ok_or_else(|| fail(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(fail(line, format!("unknown key `{key}`")));
        };
        if let Some((first, _)) = entries.insert(known, (line, value.trim())) {
            return Err(fail(line, format!("duplicate key `{key}` (first set on line {first})")));
        }
    }

    let mut cfg = RunConfig::default();
    for (&key, &(line, value)) in &entries {
        let bad = |e: String| fail(line, format!("bad value for `{key}`: {e}"));
        match key {
            "n" => cfg.n = scalar(value).map_err(bad)?,
            "d" => cfg.d = scalar(value).map_err(bad)?,
            "H" => cfg.depth = scalar(value).map_err(bad)?,
            "m" => cfg.m = scalar(value).map_err(bad)?,
            "seed" => cfg.seed = scalar(value).map_err(bad)?,
            "activation" => cfg.activation = scalar(value).map_err(bad)?,
            "sigma_w" => cfg.sigma_w = scalar(value).map_err(bad)?,
            "sigma_a" => cfg.sigma_a = scalar(value).map_err(bad)?,
            "data_seed" => cfg.data_seed = scalar(value).map_err(bad)?,
            "data" => cfg.data = Some(resolve(origin, value)),
            "widths" => cfg.widths = list(value).map_err(bad)?,
            "seeds" => cfg.seeds = list(value).map_err(bad)?,
            "experiment" => cfg.experiment = Some(list(value).map_err(bad)?),
            "t_end" => cfg.t_end = Some(scalar(value).map_err(bad)?),
            "dt" => cfg.dt = scalar(value).map_err(bad)?,
            "snapshot_every" => cfg.snapshot_every = scalar(value).map_err(bad)?,
            "kernel_order" => cfg.kernel_order = scalar(value).map_err(bad)?,
            "observe_norms" => cfg.observe_norms = scalar(value).map_err(bad)?,
            "observe_lambda_min" => cfg.observe_lambda_min = scalar(value).map_err(bad)?,
            "keep_params" => cfg.keep_params = scalar(value).map_err(bad)?,
            "stop_ratio" => cfg.stop_ratio = if value == "none" { None } else { Some(scalar(value).map_err(bad)?) },
            "p" => cfg.p = scalar(value).map_err(bad)?,
            "orders" => cfg.orders = list(value).map_err(bad)?,
            "x_new" => cfg.x_new = Some(list(value).map_err(bad)?),
            "eta" => cfg.eta = list(value).map_err(bad)?,
            "taylor_coefficients" => {
                cfg.taylor_coefficients = match value {
                    "derived" => TaylorCoefficients::Derived,
                    "printed" => TaylorCoefficients::Printed,
                    other => return Err(bad(format!("expected `derived` or `printed`, got `{other}`"))),
                }
            }
            "decay_t_end" => cfg.decay_t_end = scalar(value).map_err(bad)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    if let Some(&(_, path)) = entries.get("data") {
        if !(entries.contains_key("n") && entries.contains_key("d")) {
            let data = DataSet::from_csv(&resolve(origin, path), &InputAssumptions::default())?;
            cfg.n = data.n();
            cfg.d = data.d();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve(origin: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match origin.parent() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn scalar<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| e.to_string())
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let inner = value.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(value);
    let items: Vec<&str> = inner.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err("empty list element".into());
    }
    items.into_iter().map(scalar).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("test.cfg"))
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse("n = 3\nd = 5\nH = 1\nm = 32\nseed = 7\n").unwrap();
        assert_eq!((cfg.n, cfg.d, cfg.depth, cfg.m, cfg.seed), (3, 5, 1, 32, 7));
        let defaults = RunConfig::default();
        assert_eq!(cfg.dt, defaults.dt);
        assert_eq!(cfg.widths, defaults.widths);
        assert_eq!(cfg.activation, Activation::Tanh);
    }

    #[test]
    fn lists_comments_and_brackets() {
        let cfg = parse("widths = [64, 128,256] # three\n# only a comment\n\neta=0.1,0.05\nactivation = softplus:2\nstop_ratio = none\n").unwrap();
        assert_eq!(cfg.widths, vec![64, 128, 256]);
        assert_eq!(cfg.eta, vec![0.1, 0.05]);
        assert_eq!(cfg.activation, Activation::softplus(2.0));
        assert_eq!(cfg.stop_ratio, None);
    }

    #[test]
    fn one_width_with_slope_experiment_is_rejected() {
        match parse("widths = [64]\nexperiment = drift_scaling\n") {
            Err(Error::Config { field, msg }) => {
                assert_eq!(field, "widths");
                assert!(msg.contains(">= 3 widths"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("widths = 512\nexperiment = decay\n").is_ok());
    }

    #[test]
    fn duplicate_and_unknown_keys_cite_lines() {
        match parse("n = 3\nd = 4\nn = 5\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("line 1"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("\nwidth = 3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("n 3\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("n = 3\ndt = fast\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("widths = 1,,2\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn constraint_violations_name_the_field() {
        for (text, name) in [("dt = -1\n", "dt"), ("n = 0\n", "n"), ("p = 9\n", "p"), ("x_new = 1, 2\n", "x_new")] {
            match parse(text) {
                Err(Error::Config { field, .. }) => assert_eq!(field, name),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = parse("n = 3\nm = 64\nwidths = 64,128,256\n").unwrap();
        let b = parse("widths = 64,128,256\nm = 64\n\nn = 3\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = parse("n = 3\nm = 65\nwidths = 64,128,256\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(parse_config(Path::new("/nonexistent/x.cfg")), Err(Error::Parse { line: 0, .. })));
    }

    #[test]
    fn seed_override_shifts_the_list() {
        let mut cfg = RunConfig::default();
        cfg.override_seed(10);
        assert_eq!(cfg.seed, 10);
        assert_eq!(cfg.seeds, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn data_file_sets_shape() {
        let dir = tempfile::tempdir().unwrap();
        let data = DataSet::synthetic(3, 4, 1).unwrap();
        std::fs::write(dir.path().join("train.csv"), data.to_csv_string()).unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "data = train.csv\n").unwrap();
        let cfg = parse_config(&cfg_path).unwrap();
        assert_eq!((cfg.n, cfg.d), (3, 4));
        assert_eq!(cfg.dataset().unwrap().inputs(), data.inputs());
    }
}
