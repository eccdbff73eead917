//! Entropy-regularized optimal mass transport and its proximal operator.
//!
//! The crate is organized bottom-up:
//!
//! - [`special_fn`]: the Wright omega function used by the quadratic dual update.
//! - [`transport`]: cost and kernel construction (dense or FFT-backed), Sinkhorn
//!   and generalized Sinkhorn iterations, dual/primal objectives, the proximal
//!   operator of the transport cost, and implicit transport-plan products.
//! - [`operators`]: matched apply/adjoint pairs (discrete gradient, parallel-beam
//!   ray transform) and power-iteration norm estimates.
//! - [`prox`]: the proximal operators used by the splitting solver, with
//!   conjugates obtained through Moreau decomposition.
//! - [`splitting`]: a Douglas–Rachford type primal-dual driver for
//!   `min f(z) + Σ g_i(L_i z - r_i)`.
//! - [`tomo`]: phantoms, data simulation, filtered backprojection and assembly
//!   of the TV / TV+L2 / TV+OMT reconstruction problems.
//! - [`io`]: the matrix-text and PGM file formats used by the CLI.
//!
//! Inner loops are data-parallel through rayon when the `parallel` feature is
//! enabled (the default) and fall back to sequential loops otherwise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod operators;
pub mod par;
pub mod prox;
pub mod special_fn;
pub mod splitting;
pub mod tomo;
pub mod transport;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use operators::{Gradient, LinearOperator, ParallelGeometry, RayTransform};
pub use special_fn::{wright_omega, wright_omega_elementwise, OmegaEvalPolicy};
pub use transport::{
    CostSpec, DualPotentials, GridSpec, KernelOperator, SinkhornReport, SinkhornSettings,
};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
