//! Convex quadratic programs over the Birkhoff polytope,
//!
//! ```text
//! (P)  min ½⟨X, 𝒬X⟩ + ⟨G, X⟩   s.t.  X ∈ 𝔅n,
//! ```
//!
//! solved through its dual by an augmented Lagrangian method whose
//! subproblems are minimized by a semismooth Newton-CG method on
//!
//! ```text
//! ψ(W) = ½⟨W, 𝒬W⟩ + ⟨Z(W), Π(Z(W))⟩/σ − (‖Π(Z(W))‖² + ‖X̂‖²)/(2σ),
//! Z(W) = X̂ − σ(𝒬W + G).
//! ```

mod alm;
mod krylov;
mod q;
mod ssn2;

pub use alm::{alm_solve, qp_kkt_residual, AlmRecord, AlmSettings, QpResult};
pub use krylov::{bicgstab, q_cg, KrylovOutcome};
pub use q::{apply_q, QOperator};
pub use ssn2::{newton_direction, ssncg2_solve, Ssn2Outcome, Ssn2Settings};

use crate::projector::{ssncg1_project, ProjectionResult, SsnSettings};
use crate::{check_finite_matrix, check_square, DenseMatrix, Error, Result, Vector};

/// Everything computed while evaluating `ψ` at one `W`.
#[derive(Clone, Debug)]
pub struct PsiEval {
    pub psi: f64,
    /// `∇ψ(W) = 𝒬(W − Π(Z(W)))`.
    pub grad: DenseMatrix,
    /// `Z(W)`.
    pub zw: DenseMatrix,
    /// `Π(Z(W))`.
    pub pi: DenseMatrix,
    /// `𝒬W`.
    pub qw: DenseMatrix,
    pub proj: ProjectionResult,
}

/// Evaluates `ψ`, `∇ψ` and the projection behind them.
///
/// `warm` seeds the inner projection with a previous dual vector.
pub fn psi_value_and_grad(
    w: &DenseMatrix,
    xhat: &DenseMatrix,
    sigma: f64,
    g: &DenseMatrix,
    q: &QOperator,
    warm: Option<&Vector>,
    proj_settings: &SsnSettings,
) -> Result<PsiEval> {
    let n = check_square(w)?;
    for m in [xhat, g] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.nrows(),
            });
        }
    }
    if q.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.n(),
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidSettings("sigma must be positive".into()));
    }
    check_finite_matrix(w, "W")?;
    let qw = q.apply_unchecked(w);
    let zw = xhat - (&qw + g) * sigma;
    let proj = ssncg1_project(&zw, proj_settings, warm)?;
    let pi = proj.x.clone();
    let psi = 0.5 * w.dot(&qw) + zw.dot(&pi) / sigma - (pi.norm_squared() + xhat.norm_squared()) / (2.0 * sigma);
    let grad = &qw - q.apply_unchecked(&pi);
    Ok(PsiEval {
        psi,
        grad,
        zw,
        pi,
        qw,
        proj,
    })
}

/// `δ*_{𝔅n}(Z)` for `Z = σ⁻¹(V − Π(V))` given `Π(V)`.
///
/// `V − Π(V)` lies in the normal cone at `Π(V)`, so the support function is
/// attained there and equals `⟨Z, Π(V)⟩`.
pub fn support_function_value(z: &DenseMatrix, pi_zw: &DenseMatrix) -> f64 {
    z.dot(pi_zw)
}

/// Relative size of the `Null(𝒬)` component of `W`, from a dense assembly.
///
/// Iterates are meant to live in `Range(𝒬)`; this measures the drift for
/// small problems (`n ≤ 12`).
pub fn null_space_fraction(q: &QOperator, w: &DenseMatrix) -> Result<f64> {
    let n = check_square(w)?;
    if n != q.n() || n > 12 {
        return Err(Error::Invalid("null-space diagnostic needs matching n <= 12".into()));
    }
    let wn = w.norm();
    if wn == 0.0 {
        return Ok(0.0);
    }
    let proj = crate::jacobian::dense::dense_range_projector(&q.to_dense());
    let v = nalgebra::DVector::from_column_slice(w.as_slice());
    Ok((&v - proj * &v).norm() / wn)
}
