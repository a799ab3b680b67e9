//! Generic scalars and nestable first-order dual numbers.
//!
//! Every numeric routine in [`network`](crate::network) and
//! [`kernels`](crate::kernels) is written once against [`Scalar`]. Evaluating
//! it on [`Dual<S>`] instead of `S` yields, alongside the value, the exact
//! directional derivative along whatever tangent was seeded into the inputs.
//! Because `Dual<S>` is itself a `Scalar`, the construction nests: a
//! `Dual<Dual<f64>>` carries a mixed second derivative in its innermost
//! tangent, and directions computed at one level are automatically evaluated
//! at the perturbed point of every enclosing level.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::network::{Activation, NetworkParams};

/// The operation set shared by `f64` and every nesting depth of [`Dual`].
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Embeds a constant (all tangents zero).
    fn from_real(x: f64) -> Self;

    /// The innermost real value.
    fn real(&self) -> f64;

    fn scale(self, c: f64) -> Self;

    /// `σ^(order)(self)` for the activation's derivative ladder.
    fn smooth(self, act: &Activation, order: usize) -> Self;

    fn is_finite(&self) -> bool;

    fn zero() -> Self {
        Self::from_real(0.0)
    }

    fn one() -> Self {
        Self::from_real(1.0)
    }

    fn cmp_real(&self, other: &Self) -> Option<Ordering> {
        self.real().partial_cmp(&other.real())
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }

    #[inline]
    fn real(&self) -> f64 {
        *self
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }

    #[inline]
    fn smooth(self, act: &Activation, order: usize) -> Self {
        act.derivative(order, self)
    }

    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// `value + tangent·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual<S> {
    pub value: S,
    pub tangent: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(value: S, tangent: S) -> Self {
        Self { value, tangent }
    }

    pub fn constant(value: S) -> Self {
        Self { value, tangent: S::zero() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;

    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;

    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.value * rhs.value, self.value * rhs.tangent + self.tangent * rhs.value)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;

    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.tangent)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.value += rhs.value;
        self.tangent += rhs.tangent;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.value -= rhs.value;
        self.tangent -= rhs.tangent;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    #[inline]
    fn from_real(x: f64) -> Self {
        Self::constant(S::from_real(x))
    }

    #[inline]
    fn real(&self) -> f64 {
        self.value.real()
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        Self::new(self.value.scale(c), self.tangent.scale(c))
    }

    #[inline]
    fn smooth(self, act: &Activation, order: usize) -> Self {
        Self::new(self.value.smooth(act, order), self.value.smooth(act, order + 1) * self.tangent)
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.tangent.is_finite()
    }
}

/// Lifts `θ` to `θ + ε·v`. Applied to already-lifted parameters it adds one
/// more nesting level.
pub fn lift_params<S: Scalar>(params: &NetworkParams<S>, direction: &[S]) -> Result<NetworkParams<Dual<S>>> {
    let count = params.param_count();
    if direction.len() != count {
        return Err(Error::invalid(format!("direction has length {}, expected {count}", direction.len())));
    }
    let mut tangents = direction.iter();
    Ok(params.map(|&value| Dual::new(value, *tangents.next().expect("length checked"))))
}

/// Lifts along a real direction, seeding it as a constant tangent.
pub fn lift_params_real<S: Scalar>(params: &NetworkParams<S>, direction: &[f64]) -> Result<NetworkParams<Dual<S>>> {
    let dir: Vec<S> = direction.iter().map(|&v| S::from_real(v)).collect();
    lift_params(params, &dir)
}

/// A scalar function of the network parameters that can be evaluated at
/// any scalar type.
pub trait ParamFunction {
    fn eval<S: Scalar>(&self, params: &NetworkParams<S>) -> Result<S>;
}

/// Exact Gâteaux derivative `d/ds g(θ + s·v)` at `s = 0`, with the value.
pub fn directional_derivative<G, S>(g: &G, params: &NetworkParams<S>, direction: &[S]) -> Result<(S, S)>
where
    G: ParamFunction,
    S: Scalar,
{
    let lifted = lift_params(params, direction)?;
    let out = g.eval(&lifted)?;
    Ok((out.value, out.tangent))
}
