//! Matrix-free operators for the Birkhoff constraint map.
//!
//! The constraint map sends an n×n matrix to its stacked row and column sums,
//! `B(X) = [X e; Xᵀ e]`. Its adjoint is `B*(u, v) = u eᵀ + e vᵀ`, and its
//! range is the (2n−1)-dimensional subspace orthogonal to `(e, −e)`.

mod hessian;
mod mask;
mod pcg;

pub use hessian::{DiagPreconditioner, NullFiltered, NullSpaceFilter, RangeRestricted, StructuredHessian};
pub use mask::BinaryMask;
pub use pcg::{
    pcg_solve, pcg_solve_observed, IdentityOp, LinearOperator, PcgOutcome, Preconditioner, DEFAULT_PCG_MAXIT,
};

use crate::{check_square, DenseMatrix, Error, Result, Vector};

/// The constraint map `B` for a fixed dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BirkhoffMap {
    n: usize,
}

impl BirkhoffMap {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "dimension must be positive");
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Right-hand side `b = (e, e)`.
    pub fn rhs(&self) -> Vector {
        Vector::from_element(2 * self.n, 1.0)
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<Vector> {
        let n = check_square(x)?;
        if n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: n,
            });
        }
        let mut out = Vector::zeros(2 * n);
        row_col_sums(x.as_slice(), n, |v| v, out.as_mut_slice());
        Ok(out)
    }

    pub fn adjoint(&self, y: &Vector) -> Result<DenseMatrix> {
        if y.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                found: y.len(),
            });
        }
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, n);
        adjoint_into(y.as_slice(), n, 1.0, out.as_mut_slice());
        Ok(out)
    }
}

/// Row sums followed by column sums of an n×n matrix.
pub fn apply_b(x: &DenseMatrix) -> Result<Vector> {
    BirkhoffMap::new(check_square(x)?.max(1)).apply(x)
}

/// `u eᵀ + e vᵀ` for `y = (u, v)`; `y` must have even length.
pub fn apply_bt(y: &Vector) -> Result<DenseMatrix> {
    if !y.len().is_multiple_of(2) || y.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 2 * (y.len() / 2).max(1),
            found: y.len(),
        });
    }
    BirkhoffMap::new(y.len() / 2).adjoint(y)
}

/// Compensated row and column sums of `f(x_ij)` into `out = [rows; cols]`.
///
/// Neumaier summation keeps the residual `B(X) − b` accurate to a few ulps,
/// which the 1e-15 accuracy regime depends on.
pub(crate) fn row_col_sums(x: &[f64], n: usize, f: impl Fn(f64) -> f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), 2 * n);
    let mut comp = vec![0.0; n];
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        let col = &x[j * n..(j + 1) * n];
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for i in 0..n {
            let v = f(col[i]);
            if v == 0.0 {
                continue;
            }
            // column j
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
            // row i
            let r = out[i];
            let t = r + v;
            comp[i] += if r.abs() >= v.abs() { (r - t) + v } else { (v - t) + r };
            out[i] = t;
        }
        out[n + j] = s + c;
    }
    for i in 0..n {
        out[i] += comp[i];
    }
}

/// `out += scale * (u eᵀ + e vᵀ)`.
pub(crate) fn adjoint_into(y: &[f64], n: usize, scale: f64, out: &mut [f64]) {
    let (u, v) = y.split_at(n);
    for j in 0..n {
        let vj = v[j];
        let col = &mut out[j * n..(j + 1) * n];
        for i in 0..n {
            col[i] += scale * (u[i] + vj);
        }
    }
}

/// `out = g + u eᵀ + e vᵀ` with error-free transformations on both additions.
///
/// Entries of the projection come out of heavy cancellation (`g_ij` and
/// `u_i + v_j` are O(1) while the positive part is often much smaller), so the
/// rounding errors of the two sums are folded back before the final rounding.
pub(crate) fn shifted_into(g: &[f64], y: &[f64], n: usize, out: &mut [f64]) {
    let (u, v) = y.split_at(n);
    for j in 0..n {
        let vj = v[j];
        let src = &g[j * n..(j + 1) * n];
        let dst = &mut out[j * n..(j + 1) * n];
        for i in 0..n {
            let (s, e1) = two_sum(u[i], vj);
            let (t, e2) = two_sum(src[i], s);
            dst[i] = t + (e1 + e2);
        }
    }
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Signed imbalance `Σu − Σv`; zero exactly on the range of `B`.
pub fn range_imbalance(y: &[f64]) -> f64 {
    let n = y.len() / 2;
    y[..n].iter().sum::<f64>() - y[n..].iter().sum::<f64>()
}

/// Removes the component along `(e, −e)`, projecting onto the range of `B`.
pub fn project_to_range(y: &mut [f64]) {
    let n = y.len() / 2;
    if n == 0 {
        return;
    }
    let c = range_imbalance(y) / (2 * n) as f64;
    y[..n].iter_mut().for_each(|v| *v -= c);
    y[n..].iter_mut().for_each(|v| *v += c);
}

/// Solves `B B* y = r` for the unique `y` in the range of `B`.
///
/// `B B* = [nI, eeᵀ; eeᵀ, nI]` has eigenvalue `2n` on `(e, e)`, `n` on pairs
/// of mean-zero halves and `0` on `(e, −e)`, so the pseudo-inverse is applied
/// in closed form.
pub fn solve_bbt_pinv(r: &Vector) -> Result<Vector> {
    if !r.len().is_multiple_of(2) || r.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 2 * (r.len() / 2).max(1),
            found: r.len(),
        });
    }
    let n = r.len() / 2;
    let imbalance = range_imbalance(r.as_slice());
    if imbalance.abs() > 1e-9 * (1.0 + r.norm()) {
        return Err(Error::RangeViolation { imbalance });
    }
    let nf = n as f64;
    let mp = r.rows(0, n).sum() / nf;
    let mq = r.rows(n, n).sum() / nf;
    let along_ones = 0.5 * (mp + mq) / (2.0 * nf);
    let mut y = Vector::zeros(2 * n);
    for i in 0..n {
        y[i] = (r[i] - mp) / nf + along_ones;
        y[n + i] = (r[n + i] - mq) / nf + along_ones;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Dense 2n×n² matrix of `B` acting on column-major `vec(X)`.
    pub(crate) fn dense_b(n: usize) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(2 * n, n * n);
        for j in 0..n {
            for i in 0..n {
                b[(i, i + j * n)] = 1.0;
                b[(n + j, i + j * n)] = 1.0;
            }
        }
        b
    }

    fn dense_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
        m.clone().pseudo_inverse(1e-10).unwrap()
    }

    #[test]
    fn apply_b_examples() {
        let x = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(apply_b(&x).unwrap().as_slice(), &[3.0, 7.0, 4.0, 6.0]);
        let id = DenseMatrix::identity(4, 4);
        assert!(apply_b(&id).unwrap().iter().all(|&v| v == 1.0));
        let ones = DenseMatrix::from_element(3, 3, 1.0);
        assert!(apply_b(&ones).unwrap().iter().all(|&v| v == 3.0));
        assert!(matches!(
            apply_b(&DenseMatrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn apply_bt_examples() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            apply_bt(&y).unwrap(),
            DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0])
        );
        assert_eq!(apply_bt(&Vector::zeros(6)).unwrap(), DenseMatrix::zeros(3, 3));
        let y = Vector::from_vec(vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(apply_bt(&y).unwrap(), DenseMatrix::zeros(3, 3));
        assert!(apply_bt(&Vector::zeros(3)).is_err());
        assert!(BirkhoffMap::new(3).adjoint(&Vector::zeros(4)).is_err());
    }

    #[test]
    fn matches_dense_b() {
        let n = 4;
        let x = DenseMatrix::from_fn(n, n, |i, j| (i * 7 + j * 3) as f64 - 5.0);
        let dense = dense_b(n) * Vector::from_column_slice(x.as_slice());
        assert!((apply_b(&x).unwrap() - dense).norm() < 1e-13);
    }

    #[test]
    fn bbt_pinv_examples() {
        let y = solve_bbt_pinv(&Vector::from_element(4, 1.0)).unwrap();
        assert!(y.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(solve_bbt_pinv(&Vector::zeros(4)).unwrap(), Vector::zeros(4));
        assert!(matches!(
            solve_bbt_pinv(&Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0])),
            Err(Error::RangeViolation { .. })
        ));
    }

    #[test]
    fn bbt_pinv_matches_dense_svd() {
        for n in 1..=6 {
            let b = dense_b(n);
            let bbt = &b * b.transpose();
            let pinv = dense_pinv(&bbt);
            // r in range with mean-zero halves plus an (e, e) component
            let mut r = Vector::from_fn(2 * n, |k, _| ((k * 37 % 11) as f64) - 4.0);
            project_to_range(r.as_mut_slice());
            let expect = &pinv * &r;
            let got = solve_bbt_pinv(&r).unwrap();
            assert!((got - expect).norm() <= 1e-12 * (1.0 + r.norm()), "n = {n}");
        }
    }
}
