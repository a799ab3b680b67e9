#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod flow;
pub mod harness;
pub mod kernels;
pub mod network;
pub mod nth;
pub mod numerics;

pub use error::{Error, Result};
