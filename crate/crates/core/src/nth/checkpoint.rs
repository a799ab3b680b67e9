//! Plain-text checkpoint for a [`HierarchyState`].
//!
//! ```text
//! p,3
//! n,2
//! t,1.5e0
//! fingerprint,00ab…
//! section,f,2
//! <one value per line>
//! section,k2,4
//! …
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::HierarchyState;
use crate::error::{Error, Result};
use crate::kernels::KernelTensor;

/// Serializes `state`; values round-trip bit-exactly.
pub fn write_checkpoint(state: &HierarchyState) -> String {
    let n = state.n();
    let fingerprint = state.kernels.first().map_or(0, KernelTensor::snapshot);
    let mut out = format!("p,{}\nn,{n}\nt,{:e}\nfingerprint,{fingerprint:016x}\n", state.order(), state.time);
    let mut section = |name: String, values: &[f64]| {
        let _ = writeln!(out, "section,{name},{}", values.len());
        for v in values {
            let _ = writeln!(out, "{v:e}");
        }
    };
    section("f".into(), &state.outputs);
    for k in &state.kernels {
        section(format!("k{}", k.order()), k.values());
    }
    out
}

pub fn save_checkpoint(state: &HierarchyState, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(state))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<HierarchyState> {
    read_checkpoint(&fs::read_to_string(path)?, path)
}

/// Parses a checkpoint; `origin` only labels error messages.
pub fn read_checkpoint(text: &str, origin: &Path) -> Result<HierarchyState> {
    let fail = |line: usize, msg: String| Error::Parse { path: PathBuf::from(origin), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (no, line) = lines.next().ok_or_else(|| fail(0, format!("missing `{key}` line")))?;
        match line.split_once(',') {
            Some((k, v)) if k == key => Ok((no, v.to_string())),
            _ => Err(fail(no, format!("expected `{key},…`, found `{line}`"))),
        }
    };
    let (no, p) = header("p")?;
    let p: usize = p.parse().map_err(|e| fail(no, format!("bad order: {e}")))?;
    let (no, n) = header("n")?;
    let n: usize = n.parse().map_err(|e| fail(no, format!("bad n: {e}")))?;
    let (no, t) = header("t")?;
    let time: f64 = t.parse().map_err(|e| fail(no, format!("bad time: {e}")))?;
    let (no, fp) = header("fingerprint")?;
    let fingerprint = u64::from_str_radix(&fp, 16).map_err(|e| fail(no, format!("bad fingerprint: {e}")))?;
    if p < 2 || n == 0 {
        return Err(fail(1, format!("need p >= 2 and n >= 1, got p = {p}, n = {n}")));
    }

    let mut read_section = |name: &str, len: usize| -> Result<Vec<f64>> {
        let (no, line) = lines.next().ok_or_else(|| fail(0, format!("missing section `{name}`")))?;
        let expected = format!("section,{name},{len}");
        if line != expected {
            return Err(fail(no, format!("expected `{expected}`, found `{line}`")));
        }
        (0..len)
            .map(|_| {
                let (no, line) = lines.next().ok_or_else(|| fail(0, format!("section `{name}` is truncated")))?;
                line.parse::<f64>().map_err(|e| fail(no, format!("bad value `{line}`: {e}")))
            })
            .collect()
    };
    let outputs = read_section("f", n)?;
    let mut kernels = Vec::new();
    for r in 2..=p {
        let values = read_section(&format!("k{r}"), n.pow(r as u32))?;
        kernels.push(KernelTensor::new(r, vec![n; r], values, fingerprint)?);
    }
    Ok(HierarchyState { time, outputs, kernels })
}
