//! Fixed-step classical RK4 with cubic Hermite dense output.

use crate::error::{Error, Result};

/// Validates snapshot times: sorted, strictly increasing, inside `[0, t_end]`.
pub fn check_schedule(t_end: f64, dt: f64, snapshot_times: &[f64]) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("t_end must be non-negative, got {t_end}")));
    }
    for w in snapshot_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("snapshot times must be strictly increasing"));
        }
    }
    if let (Some(&first), Some(&last)) = (snapshot_times.first(), snapshot_times.last()) {
        if first < 0.0 || last > t_end * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::invalid(format!("snapshot times must lie in [0, {t_end}]")));
        }
    }
    Ok(())
}

/// Integrates `y' = rhs(y)` from `t = 0` to `t_end` and hands the state at
/// each requested time to `observe`. Times on the step grid get the grid
/// state exactly; others are interpolated with the cubic Hermite polynomial
/// through both step endpoints and their derivatives. `observe` returning
/// `false` stops the integration early.
///
/// Returns the final state and the time it belongs to.
pub fn integrate<R, O>(
    y0: Vec<f64>,
    t_end: f64,
    dt: f64,
    snapshot_times: &[f64],
    mut rhs: R,
    mut observe: O,
) -> Result<(Vec<f64>, f64)>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    O: FnMut(f64, &[f64]) -> Result<bool>,
{
    check_schedule(t_end, dt, snapshot_times)?;
    let tol = 1e-9 * dt;
    let steps = if t_end == 0.0 { 0 } else { ((t_end / dt) - 1e-9).ceil().max(1.0) as usize };
    let grid = |k: usize| if k == steps { t_end } else { k as f64 * dt };

    let mut y = y0;
    let mut snaps = snapshot_times.iter().copied().peekable();
    while let Some(&ts) = snaps.peek() {
        if ts > tol {
            break;
        }
        snaps.next();
        if !observe(ts, &y)? {
            return Ok((y, 0.0));
        }
    }
    if steps == 0 {
        return Ok((y, 0.0));
    }

    let mut f = rhs(&y)?;
    let dim = y.len();
    let mut stage = vec![0.0; dim];
    for k in 0..steps {
        let (t0, t1) = (grid(k), grid(k + 1));
        let h = t1 - t0;
        let k1 = &f;
        axpy_into(&mut stage, &y, 0.5 * h, k1);
        let k2 = rhs(&stage)?;
        axpy_into(&mut stage, &y, 0.5 * h, &k2);
        let k3 = rhs(&stage)?;
        axpy_into(&mut stage, &y, h, &k3);
        let k4 = rhs(&stage)?;
        let y1: Vec<f64> = (0..dim).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        if y1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { last_good_time: t0 });
        }
        let f1 = rhs(&y1)?;
        if f1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { last_good_time: t0 });
        }
        while let Some(&ts) = snaps.peek() {
            if ts > t1 + tol {
                break;
            }
            snaps.next();
            let keep_going = if (ts - t1).abs() <= tol {
                observe(ts, &y1)?
            } else {
                let s = (ts - t0) / h;
                observe(ts, &hermite(&y, &f, &y1, &f1, h, s))?
            };
            if !keep_going {
                return Ok((y1, t1));
            }
        }
        y = y1;
        f = f1;
    }
    Ok((y, t_end))
}

fn axpy_into(out: &mut [f64], y: &[f64], a: f64, x: &[f64]) {
    for ((o, &yi), &xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]).collect()
}
