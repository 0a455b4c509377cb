use crate::{DenseMatrix, Error, Result};

/// Result of a Krylov solve on n×n matrix unknowns.
#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub solution: DenseMatrix,
    pub iters: usize,
    /// Norm of the monitored residual at exit.
    pub residual: f64,
    pub converged: bool,
    /// The semi-inner product degenerated before convergence.
    pub breakdown: bool,
}

/// CG for `T d = r₀` where `T` is self-adjoint and positive definite in the
/// semi-inner product `⟨x, y⟩_𝒬 = ⟨x, 𝒬y⟩`.
///
/// `apply_q` applies `𝒬` and `apply_t` applies `T`. The monitored residual is
/// `‖𝒬(r₀ − T d)‖`, which for `T = I + σ𝒫𝒬` is the residual of the full
/// Newton system `(𝒬 + σ𝒬𝒫𝒬) d = 𝒬r₀`.
pub fn q_cg(
    apply_q: &dyn Fn(&DenseMatrix) -> DenseMatrix,
    apply_t: &dyn Fn(&DenseMatrix) -> Result<DenseMatrix>,
    r0: &DenseMatrix,
    tol: f64,
    maxit: usize,
) -> Result<KrylovOutcome> {
    let (n, m) = r0.shape();
    let mut d = DenseMatrix::zeros(n, m);
    let mut r = r0.clone();
    let mut qr = apply_q(&r);
    let mut rho = r.dot(&qr);
    let mut res = qr.norm();
    let mut p = r.clone();
    let mut qp = qr.clone();
    let mut iters = 0;
    let mut breakdown = false;
    while res > tol && iters < maxit {
        if !(rho > 0.0) {
            breakdown = res > tol;
            break;
        }
        let tp = apply_t(&p)?;
        let ptp = qp.dot(&tp);
        if !ptp.is_finite() {
            return Err(Error::NonFinite("q-cg iteration"));
        }
        if ptp <= 0.0 {
            breakdown = true;
            break;
        }
        let alpha = rho / ptp;
        d += &p * alpha;
        r -= &tp * alpha;
        qr = apply_q(&r);
        iters += 1;
        res = qr.norm();
        let rho_new = r.dot(&qr);
        let beta = rho_new / rho;
        rho = rho_new;
        p *= beta;
        p += &r;
        qp *= beta;
        qp += &qr;
    }
    Ok(KrylovOutcome {
        solution: d,
        iters,
        residual: res,
        converged: res <= tol,
        breakdown,
    })
}

/// BiCGSTAB for a general `A x = b`, monitored through `‖monitor(b − A x)‖`.
pub fn bicgstab(
    apply_a: &dyn Fn(&DenseMatrix) -> Result<DenseMatrix>,
    monitor: &dyn Fn(&DenseMatrix) -> DenseMatrix,
    b: &DenseMatrix,
    tol: f64,
    maxit: usize,
) -> Result<KrylovOutcome> {
    let (n, m) = b.shape();
    let mut x = DenseMatrix::zeros(n, m);
    let mut r = b.clone();
    let r_hat = r.clone();
    let mut res = monitor(&r).norm();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = DenseMatrix::zeros(n, m);
    let mut p = DenseMatrix::zeros(n, m);
    let mut iters = 0;
    let mut breakdown = false;
    while res > tol && iters < maxit {
        let rho_new = r_hat.dot(&r);
        if rho_new == 0.0 || omega == 0.0 {
            breakdown = true;
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p = &r + (&p - &v * omega) * beta;
        v = apply_a(&p)?;
        let denom = r_hat.dot(&v);
        if denom == 0.0 {
            breakdown = true;
            break;
        }
        alpha = rho / denom;
        let s = &r - &v * alpha;
        let t = apply_a(&s)?;
        let tt = t.dot(&t);
        omega = if tt > 0.0 { t.dot(&s) / tt } else { 0.0 };
        x += &p * alpha;
        x += &s * omega;
        r = &s - &t * omega;
        iters += 1;
        res = monitor(&r).norm();
        if !res.is_finite() {
            return Err(Error::NonFinite("bicgstab iteration"));
        }
    }
    Ok(KrylovOutcome {
        solution: x,
        iters,
        residual: res,
        converged: res <= tol,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn vec_apply(m: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
        let n = x.nrows();
        let v = m * DVector::from_column_slice(x.as_slice());
        DenseMatrix::from_column_slice(n, n, v.as_slice())
    }

    #[test]
    fn q_cg_matches_dense_solve_with_identity_inner_product() {
        let k = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 3.0 } else { 0.5 / (1.0 + (i + j) as f64) });
        let t = |x: &DenseMatrix| Ok(vec_apply(&k, x));
        let id = |x: &DenseMatrix| x.clone();
        let b = DenseMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, 0.5]);
        let out = q_cg(&id, &t, &b, 1e-13, 50).unwrap();
        let expect = k.clone().lu().solve(&DVector::from_column_slice(b.as_slice())).unwrap();
        assert!(out.converged);
        assert!((DVector::from_column_slice(out.solution.as_slice()) - expect).norm() < 1e-12);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = DenseMatrix::from_fn(9, 9, |i, j| if i == j { 4.0 } else { ((i * 3 + j) % 5) as f64 * 0.1 });
        let b = DenseMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 - 3.0);
        let out = bicgstab(&|x| Ok(vec_apply(&a, x)), &|r| r.clone(), &b, 1e-12, 100).unwrap();
        assert!(out.converged);
        let back = vec_apply(&a, &out.solution);
        assert!((back - b).norm() < 1e-11);
    }
}
