use serde::{Deserialize, Serialize};

use super::Activation;
use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Matrix, RngStream};

/// Stream id used for the weights drawn by [`NetworkConfig::init_params`].
pub const PARAM_STREAM: u64 = 0;

/// Architecture and initialization of a fully-connected network without biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Input dimension.
    pub d: usize,
    /// Width of every hidden layer.
    pub m: usize,
    /// Number of hidden layers `H`.
    pub depth: usize,
    pub activation: Activation,
    pub sigma_w: f64,
    pub sigma_a: f64,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(d: usize, m: usize, depth: usize) -> Self {
        Self { d, m, depth, activation: Activation::Tanh, sigma_w: 1.0, sigma_a: 1.0, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_width(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.depth == 0 {
            return Err(Error::invalid(format!(
                "network needs d, m, H >= 1 (got d={}, m={}, H={})",
                self.d, self.m, self.depth
            )));
        }
        if !(self.sigma_w > 0.0 && self.sigma_a > 0.0) {
            return Err(Error::invalid("sigma_w and sigma_a must be positive"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.m * self.d + (self.depth - 1) * self.m * self.m + self.m
    }

    /// Draws `W^(ℓ)_ij ~ N(0, σ_w²)` then `a_i ~ N(0, σ_a²)` from the
    /// `(seed, PARAM_STREAM)` stream.
    pub fn init_params(&self) -> Result<NetworkParams> {
        init_params(self, &mut RngStream::new(self.seed, PARAM_STREAM))
    }
}

/// Draws fresh parameters for `config` from `rng`, layer by layer in
/// canonical order.
pub fn init_params(config: &NetworkConfig, rng: &mut RngStream) -> Result<NetworkParams> {
    config.validate()?;
    let mut weights = Vec::with_capacity(config.depth);
    for layer in 0..config.depth {
        let cols = if layer == 0 { config.d } else { config.m };
        weights.push(gaussian_matrix(rng, config.m, cols, config.sigma_w)?);
    }
    let a = gaussian_matrix(rng, config.m, 1, config.sigma_a)?.into_vec();
    NetworkParams::from_parts(config.d, config.activation, weights, a)
}

/// All trainable weights `θ = (W^(1), …, W^(H), a)`.
///
/// The canonical flat order is `W^(1)` row-major, then `W^(2)`, …, `W^(H)`,
/// then `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<S = f64> {
    d: usize,
    m: usize,
    activation: Activation,
    weights: Vec<Matrix<S>>,
    a: Vec<S>,
}

impl<S> NetworkParams<S> {
    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn weights(&self) -> &[Matrix<S>] {
        &self.weights
    }

    pub fn output_weights(&self) -> &[S] {
        &self.a
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>() + self.a.len()
    }

    /// Applies `f` to every parameter in canonical order.
    pub fn map<T>(&self, mut f: impl FnMut(&S) -> T) -> NetworkParams<T> {
        let weights = self.weights.iter().map(|w| w.map(&mut f)).collect();
        let a = self.a.iter().map(&mut f).collect();
        NetworkParams { d: self.d, m: self.m, activation: self.activation, weights, a }
    }

    /// Start offset of each block (`W^(1)`, …, `W^(H)`, `a`) in the flat vector.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.weights.len() + 1);
        let mut at = 0;
        for w in &self.weights {
            offsets.push(at);
            at += w.rows() * w.cols();
        }
        offsets.push(at);
        offsets
    }
}

impl<S: Scalar> NetworkParams<S> {
    pub fn from_parts(d: usize, activation: Activation, weights: Vec<Matrix<S>>, a: Vec<S>) -> Result<Self> {
        let m = a.len();
        if d == 0 || m == 0 || weights.is_empty() {
            return Err(Error::invalid("network needs d, m, H >= 1"));
        }
        for (i, w) in weights.iter().enumerate() {
            let expected = (m, if i == 0 { d } else { m });
            if w.shape() != expected {
                return Err(Error::invalid(format!(
                    "W^({}) has shape {:?}, expected {:?}",
                    i + 1,
                    w.shape(),
                    expected
                )));
            }
        }
        Ok(Self { d, m, activation, weights, a })
    }

    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in &self.weights {
            out.extend_from_slice(w.as_slice());
        }
        out.extend_from_slice(&self.a);
        out
    }

    /// Same architecture with parameters taken from `theta` (canonical order).
    pub fn with_flat(&self, theta: &[S]) -> Result<Self> {
        let mut out = self.clone();
        out.set_flat(theta)?;
        Ok(out)
    }

    pub fn set_flat(&mut self, theta: &[S]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "flat parameter vector has length {}, expected {}",
                theta.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for w in &mut self.weights {
            let len = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&theta[at..at + len]);
            at += len;
        }
        self.a.copy_from_slice(&theta[at..]);
        Ok(())
    }

    /// Real parts of every parameter.
    pub fn to_real(&self) -> NetworkParams<f64> {
        self.map(|v| v.real())
    }
}

impl NetworkParams<f64> {
    /// FNV-1a over the parameter bits, used to tag kernel snapshots.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.d as u64);
        feed(self.m as u64);
        for w in &self.weights {
            w.as_slice().iter().for_each(|v| feed(v.to_bits()));
        }
        self.a.iter().for_each(|v| feed(v.to_bits()));
        h
    }
}
