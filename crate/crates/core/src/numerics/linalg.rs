//! Small dense eigen/singular-value routines.
//!
//! The matrices that show up here are Gram matrices over a handful of training
//! points (n ≤ ~16) or single weight matrices for norm monitoring, so cyclic
//! Jacobi and power iteration are all that is needed.

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Absolute asymmetry accepted by [`min_eigenvalue_sym`], scaled by `max(1, ‖M‖_max)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; column `k` belongs to `values[k]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigen-decomposition. The input is symmetrized first.
pub fn sym_eigen(m: &Matrix) -> Result<SymEigen> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let mut v = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = v[(k, old)];
        }
    }
    Ok(SymEigen { values, vectors })
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if m.rows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if m.rows() != m.cols() {
        return Err(Error::invalid(format!("expected a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let tol = SYMMETRY_TOL * m.max_abs().max(1.0);
    let asym = m.asymmetry();
    if asym > tol {
        return Err(Error::invalid(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    Ok(())
}

/// Smallest eigenvalue of a (numerically) symmetric matrix.
pub fn min_eigenvalue_sym(m: &Matrix) -> Result<f64> {
    Ok(sym_eigen(m)?.values[0])
}

/// All singular values, descending, via one-sided Jacobi. For an `r × c`
/// matrix there are `min(r, c)` of them.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    // columns of the taller orientation
    let work = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (r, c) = work.shape();
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| work[(i, j)]).collect()).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = cs * xp - sn * xq;
                    *y = sn * xp + cs * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn min_singular_value(m: &Matrix) -> Result<f64> {
    Ok(*singular_values(m)?.last().expect("non-empty"))
}

/// Spectral norm `‖M‖₂→₂` by power iteration on `MᵀM`.
pub fn spectral_norm(m: &Matrix, max_iter: usize, tol: f64) -> f64 {
    let c = m.cols();
    if m.rows() == 0 || c == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment
    let mut v: Vec<f64> = (0..c).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = m.tmatvec(&m.matvec(&v));
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}
