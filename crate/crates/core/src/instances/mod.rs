//! Problem data: QAPLIB instances and their convex relaxation, sparse
//! feature files with a Gaussian kernel, and seeded random matrices.

mod libsvm;
mod qaplib;
mod relaxation;

pub use libsvm::{gaussian_kernel, parse_libsvm, FeatureSet};
pub use qaplib::{load_qaplib, parse_qaplib, parse_qaplib_named, serialize_qaplib, QapInstance, ASYMMETRY_WARN};
pub use relaxation::{build_relaxation, hungarian_potentials, make_q_operator, RelaxationData};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{DenseMatrix, Error, Result};

/// QAPLIB instances shipped with the crate, as `(name, text)`.
pub const BUNDLED_QAPLIB: &[(&str, &str)] = &[("chr12c", include_str!("../../data/qaplib/chr12c.dat"))];

/// Parses every instance in [`BUNDLED_QAPLIB`].
pub fn bundled_qaplib() -> Result<Vec<QapInstance>> {
    BUNDLED_QAPLIB
        .iter()
        .map(|(name, text)| parse_qaplib_named(text, name))
        .collect()
}

/// n×n matrix of independent standard normals.
///
/// The stream is ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64(seed)`)
/// mapped through `rand_distr::StandardNormal` and written column by column,
/// so `(n, seed)` determines the matrix bit for bit.
pub fn random_gaussian(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(DenseMatrix::from_vec(n, n, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_is_deterministic() {
        let a = random_gaussian(7, 99).unwrap();
        let b = random_gaussian(7, 99).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, random_gaussian(7, 100).unwrap());
        assert!(random_gaussian(0, 1).is_err());
    }

    #[test]
    fn random_moments() {
        let n = 1000;
        let g = random_gaussian(n, 2024).unwrap();
        let count = (n * n) as f64;
        let mean = g.sum() / count;
        let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        // 4σ bounds for the sample mean and variance
        assert!(mean.abs() <= 4.0 / n as f64);
        assert!((0.98..=1.02).contains(&var));
    }
}
