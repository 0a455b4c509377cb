use super::QapInstance;
use crate::qpsolver::QOperator;
use crate::{DenseMatrix, Error, Result, Vector};

/// Spectral data and assignment-LP potentials behind the convex QAP
/// relaxation `𝒬(X) = A X B − S X − X T`.
#[derive(Clone, Debug)]
pub struct RelaxationData {
    pub va: DenseMatrix,
    pub vb: DenseMatrix,
    /// Eigenvalues of `A`, descending.
    pub alpha: Vector,
    /// Eigenvalues of `B`, ascending.
    pub beta: Vector,
    pub s_bar: Vector,
    pub t_bar: Vector,
    pub s: DenseMatrix,
    pub t: DenseMatrix,
}

impl RelaxationData {
    /// Largest violation of `s̄ᵢ + t̄ⱼ ≤ αᵢβⱼ` (nonpositive when feasible).
    pub fn lp_max_violation(&self) -> f64 {
        let n = self.alpha.len();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(self.s_bar[i] + self.t_bar[j] - self.alpha[i] * self.beta[j]);
            }
        }
        worst
    }

    /// `Σs̄ + Σt̄`.
    pub fn lp_value(&self) -> f64 {
        self.s_bar.sum() + self.t_bar.sum()
    }

    /// `Σ αᵢβᵢ`, the optimal assignment cost under the sort order.
    pub fn assignment_value(&self) -> f64 {
        self.alpha.dot(&self.beta)
    }
}

/// Eigendecomposes `A` and `B` and computes optimal potentials for
/// `max{Σs + Σt : sᵢ + tⱼ ≤ αᵢβⱼ}`.
pub fn build_relaxation(inst: &QapInstance) -> Result<RelaxationData> {
    let (alpha, va) = sorted_eigen(&inst.a, true)?;
    let (beta, vb) = sorted_eigen(&inst.b, false)?;
    let n = inst.n;
    let cost = DenseMatrix::from_fn(n, n, |i, j| alpha[i] * beta[j]);
    let (mut s_bar, t_bar) = hungarian_potentials(&cost);
    // tighten each sᵢ against the computed tⱼ so feasibility holds to rounding
    for i in 0..n {
        s_bar[i] = (0..n).map(|j| cost[(i, j)] - t_bar[j]).fold(f64::INFINITY, f64::min);
    }
    let s = &va * DenseMatrix::from_diagonal(&s_bar) * va.transpose();
    let t = &vb * DenseMatrix::from_diagonal(&t_bar) * vb.transpose();
    let sym = |m: DenseMatrix| (&m + m.transpose()) * 0.5;
    Ok(RelaxationData {
        va,
        vb,
        alpha,
        beta,
        s_bar,
        t_bar,
        s: sym(s),
        t: sym(t),
    })
}

fn sorted_eigen(m: &DenseMatrix, descending: bool) -> Result<(Vector, DenseMatrix)> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigen);
    }
    let eig = m.clone().symmetric_eigen();
    if !eig.eigenvalues.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigen);
    }
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let c = eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]);
        if descending {
            c.reverse()
        } else {
            c
        }
    });
    let vals = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Dual potentials `(u, v)` of the min-cost assignment on `cost`:
/// `uᵢ + vⱼ ≤ cᵢⱼ` with `Σu + Σv` equal to the optimal cost.
///
/// Shortest augmenting path Hungarian method, O(n³).
pub fn hungarian_potentials(cost: &DenseMatrix) -> (Vector, Vector) {
    let n = cost.nrows();
    // 1-based arrays; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (Vector::from_column_slice(&u[1..]), Vector::from_column_slice(&v[1..]))
}

/// The relaxation operator, after a randomized PSD self-check.
///
/// The check tolerance is `1e-8 · (1 + ‖A‖‖B‖)` relative to `‖X‖²`, since
/// `⟨X, 𝒬X⟩` is a difference of terms of that size.
pub fn make_q_operator(rd: &RelaxationData, inst: &QapInstance) -> Result<QOperator> {
    let q = QOperator::qap(inst.a.clone(), inst.b.clone(), rd.s.clone(), rd.t.clone())?;
    let tol = 1e-8 * (1.0 + inst.a.norm() * inst.b.norm());
    q.psd_self_check(8, 0x5eed, tol)?;
    Ok(q)
}
