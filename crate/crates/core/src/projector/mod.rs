//! Projection onto the Birkhoff polytope through its dual.
//!
//! With `C` the nonnegative orthant and `b = (e, e)`, the dual of
//! `min ½‖X − G‖²  s.t.  B X = b, X ∈ C` is
//!
//! ```text
//! min φ(y) = ½‖Π_C(B*y + G)‖² − ⟨b, y⟩ − ½‖G‖²,   y ∈ Range(B),
//! ```
//!
//! with `∇φ(y) = B Π_C(B*y + G) − b`. The primal solution is recovered as
//! `X = Π_C(B*y + G)`, so dual methods always report `η_C = 0`.

mod apg;
mod ssn;

pub use apg::{apg_project, DEFAULT_APG_MAXIT};
pub use ssn::{ssncg1_project, SsnSettings};

use std::time::Duration;

use crate::linops::{row_col_sums, shifted_into, BinaryMask};
use crate::{check_finite_matrix, check_square, DenseMatrix, Error, Result, Vector};

/// Dual iterate together with the quantities derived from it.
#[derive(Clone, Debug)]
pub struct DualState {
    pub y: Vector,
    /// `Π_C(B*y + G)`.
    pub x_cand: DenseMatrix,
    /// `B x_cand − b`.
    pub grad: Vector,
    pub phi: f64,
}

/// Evaluates `φ`, `∇φ` and the primal candidate at `y`.
pub fn dual_value_and_grad(g: &DenseMatrix, y: &Vector) -> Result<DualState> {
    let n = check_square(g)?;
    if y.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: y.len(),
        });
    }
    check_finite_matrix(g, "G")?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("y"));
    }
    let mut z = g.clone();
    let mut grad = Vector::zeros(2 * n);
    let half_sq = shifted_sums(g.as_slice(), n, y.as_slice(), z.as_mut_slice(), grad.as_mut_slice());
    z.apply(|v| *v = v.max(0.0));
    let phi = half_sq - y.sum() - 0.5 * g.norm_squared();
    Ok(DualState {
        y: y.clone(),
        x_cand: z,
        grad,
        phi,
    })
}

/// Ω: ones where `z_ij ≥ 0`, zeros included.
pub fn active_mask(z: &DenseMatrix) -> BinaryMask {
    BinaryMask::from_matrix(z, |v| v >= 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    pub eta_p: f64,
    pub eta_c: f64,
    pub eta: f64,
}

/// Relative KKT residuals of a primal-dual pair for the projection problem:
/// `η_P = ‖B X − b‖ / (1 + ‖b‖)`, `η_C = ‖X − Π_C(B*y + G)‖ / (1 + ‖X‖)`.
pub fn kkt_residuals(g: &DenseMatrix, x: &DenseMatrix, y: &Vector) -> Result<KktResiduals> {
    let n = check_square(g)?;
    if x.shape() != g.shape() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.nrows(),
        });
    }
    if y.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: y.len(),
        });
    }
    let mut sums = vec![0.0; 2 * n];
    row_col_sums(x.as_slice(), n, |v| v, &mut sums);
    let primal = sums.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>().sqrt();
    let b_norm = ((2 * n) as f64).sqrt();
    let eta_p = primal / (1.0 + b_norm);

    let mut cand = g.clone();
    shifted_into(g.as_slice(), y.as_slice(), n, cand.as_mut_slice());
    let comp = x
        .iter()
        .zip(cand.iter())
        .map(|(xv, cv)| (xv - cv.max(0.0)).powi(2))
        .sum::<f64>()
        .sqrt();
    let eta_c = comp / (1.0 + x.norm());
    Ok(KktResiduals {
        eta_p,
        eta_c,
        eta: eta_p.max(eta_c),
    })
}

/// One Newton (or APG) iteration as recorded in [`ProjectionResult::trace`].
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct IterationRecord {
    /// Residual at the start of the iteration.
    pub eta: f64,
    pub grad_norm: f64,
    pub cg_iters: usize,
    pub cg_relres: f64,
    pub shift: f64,
    /// Accepted step length `α_j`.
    pub step: f64,
    /// `⟨∇φ(y^j), d^j⟩`.
    pub directional: f64,
    /// `φ(y^{j+1}) − φ(y^j)`.
    pub phi_decrease: f64,
    pub backtracks: usize,
}

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub x: DenseMatrix,
    pub y: Vector,
    pub eta: f64,
    pub eta_p: f64,
    pub eta_c: f64,
    /// Newton iterations for SSNCG, gradient iterations for APG.
    pub iterations: usize,
    pub total_cg_iters: usize,
    pub linesearch_steps: usize,
    pub wall_time: Duration,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl ProjectionResult {
    /// Residual history `η_0, η_1, …, η_final`.
    pub fn eta_history(&self) -> Vec<f64> {
        self.trace
            .iter()
            .map(|r| r.eta)
            .chain(std::iter::once(self.eta))
            .collect()
    }
}

/// Fills `z = G + B*y`, `sums = B Π_C(z) − b` and returns `½‖Π_C(z)‖²`.
pub(crate) fn shifted_sums(g: &[f64], n: usize, y: &[f64], z: &mut [f64], sums: &mut [f64]) -> f64 {
    shifted_into(g, y, n, z);
    row_col_sums(z, n, |v| v.max(0.0), sums);
    sums.iter_mut().for_each(|s| *s -= 1.0);
    0.5 * z.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_state_examples() {
        let n = 3;
        let g = DenseMatrix::from_element(n, n, -1.0);
        let s = dual_value_and_grad(&g, &Vector::zeros(2 * n)).unwrap();
        assert_eq!(s.x_cand, DenseMatrix::zeros(n, n));
        assert!(s.grad.iter().all(|&v| v == -1.0));
        assert!((s.phi + 0.5 * 9.0).abs() < 1e-15);

        let g = DenseMatrix::from_element(n, n, 1.0 / n as f64);
        let s = dual_value_and_grad(&g, &Vector::zeros(2 * n)).unwrap();
        assert_eq!(s.x_cand, g);
        assert!(s.grad.norm() < 1e-15);

        let g = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let s = dual_value_and_grad(&g, &Vector::zeros(4)).unwrap();
        assert_eq!(s.x_cand, g);
        assert_eq!(s.grad.as_slice(), &[1.0, -1.0, 1.0, -1.0]);

        let bad = DenseMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(
            dual_value_and_grad(&bad, &Vector::zeros(4)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn active_mask_examples() {
        let z = DenseMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, -2.0]);
        assert_eq!(
            active_mask(&z).to_matrix(),
            DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(active_mask(&DenseMatrix::from_element(3, 3, -0.5)).popcount(), 0);
        assert_eq!(active_mask(&DenseMatrix::zeros(3, 3)).popcount(), 9);
    }

    #[test]
    fn kkt_examples() {
        let n = 4;
        let g = DenseMatrix::zeros(n, n);
        let r = kkt_residuals(&g, &DenseMatrix::identity(n, n), &Vector::zeros(2 * n)).unwrap();
        assert_eq!(r.eta_p, 0.0);

        let r = kkt_residuals(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(2, 2), &Vector::zeros(4)).unwrap();
        assert!((r.eta_p - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.eta_c, 0.0);

        let g = DenseMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.1]);
        let y = Vector::from_vec(vec![0.1, -0.2, 0.05, 0.05]);
        let x = dual_value_and_grad(&g, &y).unwrap().x_cand;
        let r = kkt_residuals(&g, &x, &y).unwrap();
        assert_eq!(r.eta_c, 0.0);
        assert_eq!(r.eta, r.eta_p);
    }
}
