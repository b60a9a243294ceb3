//! Numerical laboratory for periodic homogenization.
//!
//! The crate computes homogenized energy densities through finite cell
//! problems, builds and estimates two-scale gradient Young measures from
//! oscillating sequences, tests the three-condition characterization of
//! those measures, and compares `min F_eps`, the cell formula and the
//! measure representation of the homogenized energy.
//!
//! Everything lives on uniform box grids in dimension one or two:
//!
//! - [`grid`]: grids, nodal fields, cell gradients, quadrature, `<x/eps>`.
//! - [`integrand`]: energy densities `f(x, y, xi)` and the test dictionary.
//! - [`optimize`]: L-BFGS / gradient descent with Armijo backtracking.
//! - [`solver`]: cell problems on `(0,T)^N` and the functionals `F_eps`.
//! - [`measure`]: binned two-scale Young measures and their constructions.
//! - [`checker`]: conditions (i), (ii), (iii) of the characterization.
//! - [`gamma`]: Gamma-limit comparisons.
//! - [`experiment`]: JSON-configured experiment runner behind the CLI.
//!
//! Matrices `xi` in `R^{d x N}` are stored row-major as flat slices of
//! length `d * N`: entry `(c, a)` is `xi[c * N + a]`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checker;
pub mod error;
pub mod experiment;
pub mod gamma;
pub mod grid;
pub mod integrand;
pub mod measure;
pub mod optimize;
pub mod solver;

pub use error::{Error, Result};

/// Frobenius norm of a flat matrix.
pub fn frobenius(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}
