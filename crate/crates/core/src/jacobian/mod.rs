//! HS-Jacobian of the Birkhoff projector.
//!
//! At `X = Π(G)` let `Θ` mark the zero entries of `X` and `Ξ(H) = H − Θ ∘ H`.
//! The operator
//!
//! ```text
//! 𝒫(H) = Ξ(H) − Ξ B* (B Ξ B*)† B Ξ(H)
//! ```
//!
//! is the orthogonal projector onto matrices that vanish on `Θ` and have zero
//! row and column sums. `B Ξ B*` has the same block form as the Newton
//! Hessian with mask `1 − Θ`, so the pseudo-inverse action reuses the
//! structured operator and PCG.

pub mod dense;

use crate::linops::{pcg_solve, row_col_sums, BinaryMask, RangeRestricted, StructuredHessian};
use crate::projector::{ssncg1_project, ProjectionResult, SsnSettings};
use crate::{check_finite_matrix, check_square, DenseMatrix, Error, Result, Vector};

/// Projection accuracy required before the zero pattern is trusted.
pub const REQUIRED_ETA: f64 = 1e-9;
pub const INNER_TOL: f64 = 1e-12;

/// Relative threshold below which an entry of `Π(G)` counts as zero.
pub fn zero_tolerance(g: &DenseMatrix) -> f64 {
    1e-11 * (1.0 + g.norm())
}

#[derive(Clone, Debug)]
pub struct HsJacobianOp {
    theta: BinaryMask,
    /// `1 − Θ`, the support of `Ξ`.
    free: BinaryMask,
    n: usize,
    pub inner_tol: f64,
    pub inner_maxit: usize,
}

impl HsJacobianOp {
    /// Operator for a given zero pattern `Θ`.
    pub fn from_theta(theta: BinaryMask) -> Self {
        let n = theta.n();
        let free = theta.complement();
        Self {
            theta,
            free,
            n,
            inner_tol: INNER_TOL,
            inner_maxit: (2 * n).max(10),
        }
    }

    pub fn theta(&self) -> &BinaryMask {
        &self.theta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `𝒫(H)`.
    pub fn apply(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        let n = check_square(h)?;
        if n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: n,
            });
        }
        let mut xi_h = self.free.hadamard(h);
        let mut rhs = Vector::zeros(2 * n);
        row_col_sums(xi_h.as_slice(), n, |v| v, rhs.as_mut_slice());
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(xi_h);
        }
        let op = StructuredHessian::new(&self.free, 0.0);
        let precond = RangeRestricted(op.preconditioner());
        let out = pcg_solve(&op, &rhs, self.inner_tol, self.inner_maxit, Some(&precond))?;
        if !out.converged && out.relres > 1e3 * self.inner_tol {
            return Err(Error::InnerSolve { relres: out.relres });
        }
        let (u, v) = out.solution.as_slice().split_at(n);
        let dst = xi_h.as_mut_slice();
        for j in 0..n {
            let vj = v[j];
            self.free.for_each_in_col(j, true, |i| dst[i + j * n] -= u[i] + vj);
        }
        Ok(xi_h)
    }

    /// The n²×n² matrix of `𝒫` acting on column-major `vec(H)`.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.n;
        let mut m = DenseMatrix::zeros(n * n, n * n);
        let mut e = DenseMatrix::zeros(n, n);
        for k in 0..n * n {
            e.as_mut_slice()[k] = 1.0;
            let col = self.apply(&e)?;
            m.column_mut(k).copy_from_slice(col.as_slice());
            e.as_mut_slice()[k] = 0.0;
        }
        Ok(m)
    }
}

/// Builds `𝒫` at `G` from a converged projection of `G`.
pub fn build_hs_jacobian(g: &DenseMatrix, proj: &ProjectionResult) -> Result<HsJacobianOp> {
    let n = check_square(g)?;
    if proj.x.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: proj.x.nrows(),
        });
    }
    if !(proj.eta <= REQUIRED_ETA) {
        return Err(Error::Unconverged {
            eta: proj.eta,
            required: REQUIRED_ETA,
        });
    }
    Ok(HsJacobianOp::from_theta(zero_pattern(&proj.x, zero_tolerance(g))))
}

pub(crate) fn zero_pattern(x: &DenseMatrix, tol: f64) -> BinaryMask {
    BinaryMask::from_matrix(x, |v| v <= tol)
}

/// Outcome of comparing `Π(G + tH)` against its first-order model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Linearization {
    /// `‖Π(G + tH) − Π(G) − t𝒫(H)‖` with the zero pattern unchanged.
    Residual(f64),
    /// The perturbation moved an entry across zero; no residual is claimed.
    ActiveSetChanged,
}

/// Checks `Π(G + tH) = Π(G) + t𝒫(H)` with two high-accuracy projections.
pub fn local_linearization_check(g: &DenseMatrix, h: &DenseMatrix, t: f64) -> Result<Linearization> {
    let n = check_square(g)?;
    if h.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h.nrows(),
        });
    }
    check_finite_matrix(h, "H")?;
    if h.iter().all(|&v| v == 0.0) || t == 0.0 {
        return Ok(Linearization::Residual(0.0));
    }
    let settings = SsnSettings::with_tol(1e-15);
    let base = ssncg1_project(g, &settings, None)?;
    let perturbed_g = g + h * t;
    let moved = ssncg1_project(&perturbed_g, &settings, Some(&base.y))?;
    for r in [&base, &moved] {
        if !(r.eta <= 1e-12) {
            return Err(Error::Unconverged {
                eta: r.eta,
                required: 1e-12,
            });
        }
    }
    let op = build_hs_jacobian(g, &base)?;
    if zero_pattern(&moved.x, zero_tolerance(g)) != *op.theta() {
        return Ok(Linearization::ActiveSetChanged);
    }
    let model = &base.x + op.apply(h)? * t;
    Ok(Linearization::Residual((moved.x - model).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::apply_b;

    fn project(g: &DenseMatrix) -> ProjectionResult {
        ssncg1_project(g, &SsnSettings::with_tol(1e-15), None).unwrap()
    }

    #[test]
    fn interior_projection_has_empty_theta() {
        let n = 4;
        let g = DenseMatrix::from_element(n, n, 0.25);
        let op = build_hs_jacobian(&g, &project(&g)).unwrap();
        assert_eq!(op.theta().popcount(), 0);
        // eeᵀ = B*(e, 0) is removed entirely
        let p = op.apply(&DenseMatrix::from_element(n, n, 1.0)).unwrap();
        assert!(p.norm() < 1e-13);
        // zero row and column sums are kept
        let h = DenseMatrix::from_fn(n, n, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        assert!((op.apply(&h).unwrap() - &h).norm() < 1e-13);
    }

    #[test]
    fn two_by_two_vertex_gives_zero_operator() {
        let g = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let op = build_hs_jacobian(&g, &project(&g)).unwrap();
        assert_eq!(
            op.theta().to_matrix(),
            DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        for k in 0..4 {
            let mut h = DenseMatrix::zeros(2, 2);
            h.as_mut_slice()[k] = 1.0;
            assert!(op.apply(&h).unwrap().norm() < 1e-14);
        }
        assert!(op.to_dense().unwrap().norm() < 1e-14);
    }

    #[test]
    fn output_vanishes_on_theta_and_has_zero_sums() {
        let g = DenseMatrix::from_fn(7, 7, |i, j| ((i * 5 + j * 3) % 7) as f64 - 2.5);
        let op = build_hs_jacobian(&g, &project(&g)).unwrap();
        assert!(op.theta().popcount() > 0);
        let h = DenseMatrix::from_fn(7, 7, |i, j| (i as f64 - j as f64).sin());
        let p = op.apply(&h).unwrap();
        assert!(op.theta().hadamard(&p).norm() <= 1e-12);
        assert!(apply_b(&p).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn rejects_unconverged_projection() {
        let g = DenseMatrix::from_fn(5, 5, |i, j| (i * j) as f64);
        let mut r = project(&g);
        r.eta = 1e-3;
        assert!(matches!(build_hs_jacobian(&g, &r), Err(Error::Unconverged { .. })));
        assert!(build_hs_jacobian(&DenseMatrix::zeros(4, 4), &project(&g)).is_err());
    }

    #[test]
    fn linearization_examples() {
        let g = DenseMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 11) % 13) as f64 / 6.0 - 1.0);
        assert_eq!(
            local_linearization_check(&g, &DenseMatrix::zeros(6, 6), 1e-6).unwrap(),
            Linearization::Residual(0.0)
        );
        let h = DenseMatrix::from_fn(6, 6, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        match local_linearization_check(&g, &h, 1e-6).unwrap() {
            Linearization::Residual(r) => assert!(r <= 1e-9 * (1.0 + h.norm()), "r = {r}"),
            Linearization::ActiveSetChanged => panic!("small step changed the active set"),
        }
        assert_eq!(
            local_linearization_check(&g, &h, 10.0).unwrap(),
            Linearization::ActiveSetChanged
        );
    }
}
