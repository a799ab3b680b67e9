use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Highest derivative order the ladders are tabulated for.
pub const MAX_DERIVATIVE_ORDER: usize = 16;

/// Smooth activation with an exact derivative ladder `σ^(r)`, `r ≤ MAX_DERIVATIVE_ORDER`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// `ln(1 + exp(a·x)) / a`.
    Softplus {
        sharpness: f64,
    },
    /// `σ(x) = x`; only useful for closed-form checks.
    Identity,
}

// d^k/dz^k tanh(z) = P_k(tanh z), P_0(t) = t, P_{k+1}(t) = P_k'(t)(1 - t²).
static TANH_LADDER: LazyLock<Vec<Vec<f64>>> = LazyLock::new(|| ladder(&[0.0, 1.0], &[1.0, 0.0, -1.0]));

// d^k/du^k s(u) = Q_k(s(u)) for the logistic s, Q_0(s) = s, Q_{k+1}(s) = Q_k'(s)(s - s²).
static LOGISTIC_LADDER: LazyLock<Vec<Vec<f64>>> = LazyLock::new(|| ladder(&[0.0, 1.0], &[0.0, 1.0, -1.0]));

/// Coefficient tables (ascending powers) for `P_{k+1} = P_k' · q`.
fn ladder(p0: &[f64], q: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![p0.to_vec()];
    for _ in 0..MAX_DERIVATIVE_ORDER {
        let prev = out.last().unwrap();
        let deriv: Vec<f64> = prev.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        let mut next = vec![0.0; deriv.len() + q.len()];
        for (i, a) in deriv.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        while next.len() > 1 && *next.last().unwrap() == 0.0 {
            next.pop();
        }
        out.push(next);
    }
    out
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn softplus(sharpness: f64) -> Self {
        Activation::Softplus { sharpness }
    }

    pub fn max_order(&self) -> usize {
        MAX_DERIVATIVE_ORDER
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    /// `σ^(order)(x)`.
    ///
    /// Panics if `order > MAX_DERIVATIVE_ORDER`.
    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        assert!(
            order <= MAX_DERIVATIVE_ORDER,
            "activation derivative of order {order} requested, ladder stops at {MAX_DERIVATIVE_ORDER}"
        );
        match *self {
            Activation::Tanh => {
                if order == 0 {
                    x.tanh()
                } else {
                    horner(&TANH_LADDER[order], x.tanh())
                }
            }
            Activation::Softplus { sharpness: a } => {
                let u = a * x;
                if order == 0 {
                    (u.max(0.0) + (-u.abs()).exp().ln_1p()) / a
                } else {
                    a.powi(order as i32 - 1) * horner(&LOGISTIC_LADDER[order - 1], logistic(u))
                }
            }
            Activation::Identity => match order {
                0 => x,
                1 => 1.0,
                _ => 0.0,
            },
        }
    }

    /// Uniform bound `C_r ≥ sup |σ^(r)|`, estimated on a dense grid for the
    /// bounded activations; `None` when no finite bound exists (order 0).
    pub fn derivative_bound(&self, order: usize) -> Option<f64> {
        match self {
            Activation::Identity => match order {
                0 => None,
                1 => Some(1.0),
                _ => Some(0.0),
            },
            Activation::Tanh if order == 0 => Some(1.0),
            Activation::Softplus { .. } if order == 0 => None,
            _ => {
                let span = match self {
                    Activation::Softplus { sharpness } => 20.0 / sharpness,
                    _ => 20.0,
                };
                let steps = 20_000;
                let sup = (0..=steps)
                    .map(|i| -span + 2.0 * span * i as f64 / steps as f64)
                    .map(|x| self.derivative(order, x).abs())
                    .fold(0.0, f64::max);
                Some(sup)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Softplus { sharpness } => write!(f, "softplus:{sharpness}"),
            Activation::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `tanh`, `identity`, `softplus` (sharpness 1) and `softplus:<a>`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        match s {
            "tanh" => return Ok(Activation::Tanh),
            "identity" => return Ok(Activation::Identity),
            "softplus" => return Ok(Activation::softplus(1.0)),
            _ => {}
        }
        if let Some(a) = s.strip_prefix("softplus:") {
            let a: f64 = a.trim().parse().map_err(|_| Error::invalid(format!("bad softplus sharpness `{a}`")))?;
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid("softplus sharpness must be positive"));
            }
            return Ok(Activation::softplus(a));
        }
        Err(Error::invalid(format!("unknown activation `{s}`")))
    }
}
