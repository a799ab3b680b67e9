//! The finite-width fully-connected network `x^(ℓ) = σ(W^(ℓ) x^(ℓ-1)) / √m`,
//! `f = aᵀ x^(H)`, written once against [`Scalar`](crate::autodiff::Scalar)
//! so that every routine also runs on dual numbers.

mod activation;
mod data;
mod model;
mod params;

pub use activation::{Activation, MAX_DERIVATIVE_ORDER};
pub use data::{DataSet, InputAssumptions, INPUT_STREAM, LABEL_STREAM};
pub use model::{loss, loss_gradient, ForwardTrace};
pub use params::{init_params, NetworkConfig, NetworkParams, PARAM_STREAM};
