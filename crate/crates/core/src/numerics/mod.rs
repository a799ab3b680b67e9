//! Dense linear algebra, deterministic random streams and small eigenvalue
//! routines shared by the rest of the crate.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{
    min_eigenvalue_sym, min_singular_value, singular_values, spectral_norm, sym_eigen, SymEigen, SYMMETRY_TOL,
};
pub use matrix::{dot, norm2, norm_inf, Matrix};
pub use rng::{gaussian_matrix, RngStream};
