use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{check_square, DenseMatrix, Error, Result};

/// Self-adjoint positive semidefinite map on n×n matrices.
#[derive(Clone, Debug, PartialEq)]
pub enum QOperator {
    Zero {
        n: usize,
    },
    Identity {
        n: usize,
    },
    /// `X ↦ A X B − S X − X T` with all four matrices symmetric.
    Qap {
        a: DenseMatrix,
        b: DenseMatrix,
        s: DenseMatrix,
        t: DenseMatrix,
    },
    /// Explicit n²×n² matrix acting on column-major `vec(X)`; small tests only.
    Dense {
        n: usize,
        m: DenseMatrix,
    },
}

impl QOperator {
    pub fn qap(a: DenseMatrix, b: DenseMatrix, s: DenseMatrix, t: DenseMatrix) -> Result<Self> {
        let n = check_square(&a)?;
        for m in [&b, &s, &t] {
            if check_square(m)? != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        Ok(Self::Qap { a, b, s, t })
    }

    pub fn dense(m: DenseMatrix) -> Result<Self> {
        let nn = check_square(&m)?;
        let n = (nn as f64).sqrt().round() as usize;
        if n * n != nn {
            return Err(Error::Invalid(format!(
                "dense operator size {nn} is not a perfect square"
            )));
        }
        Ok(Self::Dense { n, m })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Zero { n } | Self::Identity { n } | Self::Dense { n, .. } => *n,
            Self::Qap { a, .. } => a.nrows(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Zero { .. } => "zero",
            Self::Identity { .. } => "identity",
            Self::Qap { .. } => "qap",
            Self::Dense { .. } => "dense",
        }
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let n = check_square(x)?;
        if n != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: n,
            });
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Zero { n } => DenseMatrix::zeros(*n, *n),
            Self::Identity { .. } => x.clone(),
            Self::Qap { a, b, s, t } => a * x * b - s * x - x * t,
            Self::Dense { n, m } => {
                let v = m * nalgebra::DVector::from_column_slice(x.as_slice());
                DenseMatrix::from_column_slice(*n, *n, v.as_slice())
            }
        }
    }

    /// `⟨X, 𝒬X⟩`.
    pub fn quad(&self, x: &DenseMatrix) -> Result<f64> {
        Ok(x.dot(&self.apply(x)?))
    }

    /// The n²×n² matrix on column-major `vec(X)`.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n();
        let mut m = DenseMatrix::zeros(n * n, n * n);
        let mut e = DenseMatrix::zeros(n, n);
        for k in 0..n * n {
            e.as_mut_slice()[k] = 1.0;
            m.column_mut(k).copy_from_slice(self.apply_unchecked(&e).as_slice());
            e.as_mut_slice()[k] = 0.0;
        }
        m
    }

    /// Randomized PSD check on `samples` Gaussian matrices.
    ///
    /// Returns the smallest observed `⟨X, 𝒬X⟩ / ‖X‖²`; fails with
    /// [`Error::NotPsd`] if it falls below `−rel_tol`.
    pub fn psd_self_check(&self, samples: usize, seed: u64, rel_tol: f64) -> Result<f64> {
        let n = self.n();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let x = DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let ratio = self.quad(&x)? / x.norm_squared();
            worst = worst.min(ratio);
            if ratio < -rel_tol {
                return Err(Error::NotPsd { value: ratio });
            }
        }
        Ok(worst)
    }
}

impl QOperator {
    /// Power-iteration estimate of the largest eigenvalue (`0` for `Zero`,
    /// `1` for `Identity`). Deterministic start; at most `iters` steps.
    pub fn spectral_norm_estimate(&self, iters: usize) -> f64 {
        match self {
            Self::Zero { .. } => return 0.0,
            Self::Identity { .. } => return 1.0,
            _ => {}
        }
        let n = self.n();
        let mut v = DenseMatrix::from_fn(n, n, |i, j| 1.0 + ((3 * i + 7 * j) % 11) as f64 / 11.0);
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w = self.apply_unchecked(&v);
            let norm = w.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                break;
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= 1e-3 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }

    /// `𝒬 / c` for the explicit variants; `None` for `Zero` and `Identity`.
    pub fn scaled(&self, c: f64) -> Option<QOperator> {
        match self {
            Self::Qap { a, b, s, t } => Some(Self::Qap {
                a: a / c,
                b: b.clone(),
                s: s / c,
                t: t / c,
            }),
            Self::Dense { n, m } => Some(Self::Dense { n: *n, m: m / c }),
            _ => None,
        }
    }
}

/// Apply `𝒬` to a matrix; free-function form of [`QOperator::apply`].
pub fn apply_q(q: &QOperator, x: &DenseMatrix) -> Result<DenseMatrix> {
    q.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_estimate_and_scaling() {
        let d = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 1.0, 0.5, 0.0]));
        let q = QOperator::dense(d).unwrap();
        assert!((q.spectral_norm_estimate(200) - 5.0).abs() < 5e-2);
        let half = q.scaled(2.0).unwrap();
        let x = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(half.apply(&x).unwrap() * 2.0, q.apply(&x).unwrap());
        assert_eq!(QOperator::Zero { n: 2 }.spectral_norm_estimate(5), 0.0);
        assert_eq!(QOperator::Identity { n: 2 }.spectral_norm_estimate(5), 1.0);
        assert!(QOperator::Identity { n: 2 }.scaled(2.0).is_none());
    }

    #[test]
    fn simple_variants() {
        let x = DenseMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(
            apply_q(&QOperator::Zero { n: 2 }, &x).unwrap(),
            DenseMatrix::zeros(2, 2)
        );
        assert_eq!(apply_q(&QOperator::Identity { n: 2 }, &x).unwrap(), x);
        let i = DenseMatrix::identity(2, 2);
        let q = QOperator::qap(i.clone(), i.clone(), &i * 0.5, &i * 0.5).unwrap();
        assert!(q.apply(&x).unwrap().norm() < 1e-15);
        assert!(q.apply(&DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn qap_matches_kronecker_assembly() {
        let a = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 1.0, 0.0, 1.0, 3.0]);
        let b = DenseMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 1.0, 0.0, 1.0]);
        let s = DenseMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let t = DenseMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.3, 0.0, 1.0]);
        let q = QOperator::qap(a.clone(), b.clone(), s.clone(), t.clone()).unwrap();
        let id = DenseMatrix::identity(3, 3);
        // vec(AXB) = (Bᵀ ⊗ A) vec(X), vec(SX) = (I ⊗ S) vec(X), vec(XT) = (Tᵀ ⊗ I) vec(X)
        let kron = b.transpose().kronecker(&a) - id.kronecker(&s) - t.transpose().kronecker(&id);
        assert!((q.to_dense() - &kron).norm() < 1e-13);
        let dense = QOperator::dense(kron).unwrap();
        let x = DenseMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        assert!((dense.apply(&x).unwrap() - q.apply(&x).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn psd_check_detects_indefinite() {
        assert!(QOperator::Identity { n: 4 }.psd_self_check(5, 1, 1e-10).unwrap() > 0.99);
        let neg = QOperator::dense(-DenseMatrix::identity(4, 4)).unwrap();
        assert!(matches!(neg.psd_self_check(3, 1, 1e-10), Err(Error::NotPsd { .. })));
        assert!(QOperator::dense(DenseMatrix::identity(5, 5)).is_err());
    }
}
