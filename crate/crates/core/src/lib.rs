//! Euclidean projection onto the Birkhoff polytope (doubly stochastic
//! matrices) by a dual semismooth Newton-CG method, the HS-Jacobian of that
//! projector, and an augmented Lagrangian solver for convex quadratic programs
//! over the polytope.
//!
//! The crate is organized bottom-up:
//!
//! - [`linops`]: matrix-free row/column-sum map, structured generalized
//!   Hessian, diagonal preconditioner and preconditioned CG.
//! - [`projector`]: the semismooth Newton-CG projector and an accelerated
//!   proximal gradient baseline, with KKT residuals.
//! - [`jacobian`]: the HS-Jacobian operator plus dense small-scale oracles.
//! - [`qpsolver`]: quadratic operators, the inner Newton solver and the
//!   augmented Lagrangian outer loop.
//! - [`instances`]: QAPLIB and sparse-feature readers, relaxation data,
//!   Gaussian kernels and seeded random matrices.
//! - [`report`] and [`cli`]: reporting, residual recomputation and the
//!   command-line front end.

// `!(a > b)` is used on purpose so that NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod instances;
pub mod jacobian;
pub mod linops;
pub mod projector;
pub mod qpsolver;
pub mod report;

pub use error::{Error, Result};

/// Square matrix of 64-bit floats, stored column-major.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
/// Plain vector of 64-bit floats.
pub type Vector = nalgebra::DVector<f64>;

pub(crate) fn check_square(m: &DenseMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn check_finite_matrix(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
