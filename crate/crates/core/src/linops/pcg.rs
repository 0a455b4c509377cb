use crate::{Error, Result, Vector};

pub const DEFAULT_PCG_MAXIT: usize = 500;

/// A self-adjoint linear map on ℝᵈ applied without forming its matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Vector, out: &mut Vector);
}

pub trait Preconditioner {
    /// `z = M⁻¹ r`.
    fn apply(&self, r: &Vector, z: &mut Vector);
}

#[derive(Clone, Copy, Debug)]
pub struct IdentityOp(pub usize);

impl LinearOperator for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &Vector, out: &mut Vector) {
        out.copy_from(x);
    }
}

#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub solution: Vector,
    pub iters: usize,
    /// `‖rhs − A x‖ / ‖rhs‖` of the recursively updated residual.
    pub relres: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients from the zero vector.
///
/// Stops when the residual 2-norm drops to `tol · ‖rhs‖` or after `maxit`
/// iterations; non-convergence is reported through `relres`/`converged`.
/// For singular positive semidefinite operators with `rhs` in the range the
/// iterates stay in the Krylov space of `rhs`, which yields the minimum-norm
/// solution when no preconditioner is used.
pub fn pcg_solve(
    op: &dyn LinearOperator,
    rhs: &Vector,
    tol: f64,
    maxit: usize,
    precond: Option<&dyn Preconditioner>,
) -> Result<PcgOutcome> {
    pcg_solve_observed(op, rhs, tol, maxit, precond, |_| {})
}

/// [`pcg_solve`] with a callback invoked on every iterate.
pub fn pcg_solve_observed(
    op: &dyn LinearOperator,
    rhs: &Vector,
    tol: f64,
    maxit: usize,
    precond: Option<&dyn Preconditioner>,
    mut observe: impl FnMut(&Vector),
) -> Result<PcgOutcome> {
    let dim = op.dim();
    if rhs.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rhs.len(),
        });
    }
    if !rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("pcg right-hand side"));
    }
    let rhs_norm = rhs.norm();
    let mut x = Vector::zeros(dim);
    if rhs_norm == 0.0 {
        return Ok(PcgOutcome {
            solution: x,
            iters: 0,
            relres: 0.0,
            converged: true,
        });
    }
    let target = tol * rhs_norm;
    let mut r = rhs.clone();
    let mut z = Vector::zeros(dim);
    let apply_precond = |r: &Vector, z: &mut Vector| match precond {
        Some(p) => p.apply(r, z),
        None => z.copy_from(r),
    };
    apply_precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = Vector::zeros(dim);
    let mut rnorm = rhs_norm;
    let mut iters = 0;
    while rnorm > target && iters < maxit {
        op.apply(&p, &mut ap);
        let pap = p.dot(&ap);
        if !pap.is_finite() || !rz.is_finite() {
            return Err(Error::NonFinite("pcg iteration"));
        }
        if pap <= 0.0 {
            // direction lies in the null space: nothing more to gain
            break;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        iters += 1;
        observe(&x);
        rnorm = r.norm();
        if rnorm <= target {
            break;
        }
        apply_precond(&r, &mut z);
        let rz_new = r.dot(&z);
        if !(rz_new > 0.0) {
            // breakdown at roundoff level; keep the current iterate
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p *= beta;
        p += &z;
    }
    let relres = rnorm / rhs_norm;
    Ok(PcgOutcome {
        solution: x,
        iters,
        relres,
        converged: rnorm <= target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{project_to_range, BinaryMask, RangeRestricted, StructuredHessian};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct DenseOp(DMatrix<f64>);

    impl LinearOperator for DenseOp {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &Vector, out: &mut Vector) {
            out.copy_from(&(&self.0 * x));
        }
    }

    fn dense_of(op: &dyn LinearOperator) -> DMatrix<f64> {
        let d = op.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut out = Vector::zeros(d);
        for k in 0..d {
            let mut e = Vector::zeros(d);
            e[k] = 1.0;
            op.apply(&e, &mut out);
            m.set_column(k, &out);
        }
        m
    }

    #[test]
    fn identity_converges_in_one_step() {
        let rhs = Vector::from_vec(vec![1.0, -2.0, 3.5]);
        let out = pcg_solve(&IdentityOp(3), &rhs, 1e-14, 10, None).unwrap();
        assert_eq!(out.iters, 1);
        assert!((out.solution - rhs).norm() < 1e-15);
    }

    #[test]
    fn all_ones_mask_example() {
        let mask = BinaryMask::ones(2);
        let h = StructuredHessian::new(&mask, 0.0);
        let out = pcg_solve(&h, &Vector::from_element(4, 1.0), 1e-14, 50, None).unwrap();
        assert!(out.converged);
        assert!(out.solution.iter().all(|&v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn singular_system_gives_minimum_norm_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=6 {
            let mask = BinaryMask::from_fn(n, |_, _| rng.random::<f64>() < 0.6);
            let h = StructuredHessian::new(&mask, 0.0);
            let v = dense_of(&h);
            let pinv = v.clone().pseudo_inverse(1e-10).unwrap();
            let x0 = Vector::from_fn(2 * n, |_, _| rng.random::<f64>() - 0.5);
            let rhs = &v * x0;
            let out = pcg_solve(&h, &rhs, 1e-14, 200, None).unwrap();
            let expect = &pinv * &rhs;
            assert!((out.solution - expect).norm() <= 1e-10 * (1.0 + rhs.norm()), "n={n}");
        }
    }

    #[test]
    fn spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [3, 8, 20] {
            let l = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
            let a = &l * l.transpose() + DMatrix::identity(d, d) * 0.1;
            let rhs = Vector::from_fn(d, |_, _| rng.random::<f64>());
            let expect = a.clone().lu().solve(&rhs).unwrap();
            let out = pcg_solve(&DenseOp(a), &rhs, 1e-14, 500, None).unwrap();
            assert!((out.solution - &expect).norm() <= 1e-10 * expect.norm());
        }
    }

    #[test]
    fn preconditioned_iterates_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 12;
        let mask = BinaryMask::from_fn(n, |_, _| rng.random::<f64>() < 0.3);
        let h = StructuredHessian::new(&mask, 1e-3);
        let pre = RangeRestricted(h.preconditioner());
        let mut rhs = Vector::from_fn(2 * n, |_, _| rng.random::<f64>() - 0.5);
        project_to_range(rhs.as_mut_slice());
        let out = pcg_solve_observed(&h, &rhs, 1e-13, 500, Some(&pre), |x| {
            let s = crate::linops::range_imbalance(x.as_slice());
            assert!(s.abs() <= 1e-10 * x.norm().max(1e-300));
        })
        .unwrap();
        assert!(out.converged);
    }

    #[test]
    fn rejects_non_finite() {
        let rhs = Vector::from_vec(vec![f64::NAN, 1.0]);
        assert!(matches!(
            pcg_solve(&IdentityOp(2), &rhs, 1e-10, 5, None),
            Err(Error::NonFinite(_))
        ));
    }
}
