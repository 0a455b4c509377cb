use super::mask::BinaryMask;
use super::pcg::{LinearOperator, Preconditioner};
use super::project_to_range;
use crate::{Error, Result, Vector};

/// `V + εI` with `V = B (Ω ∘ ·) B* = [Diag(Ωe), Ω; Ωᵀ, Diag(Ωᵀe)]`.
#[derive(Clone, Copy, Debug)]
pub struct StructuredHessian<'a> {
    mask: &'a BinaryMask,
    shift: f64,
}

impl<'a> StructuredHessian<'a> {
    pub fn new(mask: &'a BinaryMask, shift: f64) -> Self {
        assert!(shift >= 0.0, "shift must be nonnegative");
        Self { mask, shift }
    }

    pub fn mask(&self) -> &BinaryMask {
        self.mask
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `(V + εI) d`, checked.
    pub fn apply_v(&self, d: &Vector) -> Result<Vector> {
        let n = self.mask.n();
        if d.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                found: d.len(),
            });
        }
        let mut out = Vector::zeros(2 * n);
        self.apply_into(d.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn apply_into(&self, d: &[f64], out: &mut [f64]) {
        let m = self.mask;
        let n = m.n();
        let (u, v) = d.split_at(n);
        let (ou, ov) = out.split_at_mut(n);
        let rows = m.row_sums();
        let cols = m.col_sums();
        for i in 0..n {
            ou[i] = (rows[i] as f64 + self.shift) * u[i];
            ov[i] = (cols[i] as f64 + self.shift) * v[i];
        }
        // Off-diagonal blocks Ωv and Ωᵀu: iterate the ones when Ω is sparse,
        // otherwise start from the all-ones product and subtract the zeros.
        if 2 * m.popcount() <= n * n {
            for j in 0..n {
                let vj = v[j];
                let mut acc = 0.0;
                m.for_each_in_col(j, true, |i| {
                    ou[i] += vj;
                    acc += u[i];
                });
                ov[j] += acc;
            }
        } else {
            let su: f64 = u.iter().sum();
            let sv: f64 = v.iter().sum();
            ou.iter_mut().for_each(|x| *x += sv);
            ov.iter_mut().for_each(|x| *x += su);
            for j in 0..n {
                let vj = v[j];
                let mut acc = 0.0;
                m.for_each_in_col(j, false, |i| {
                    ou[i] -= vj;
                    acc += u[i];
                });
                ov[j] -= acc;
            }
        }
    }

    /// Diagonal preconditioner `V̂ = Diag([Ωe; Ωᵀe]) + εI`.
    pub fn preconditioner(&self) -> DiagPreconditioner {
        let m = self.mask;
        let diag = m
            .row_sums()
            .iter()
            .chain(m.col_sums())
            .map(|&c| c as f64 + self.shift)
            .collect::<Vec<_>>();
        DiagPreconditioner {
            diag: Vector::from_vec(diag),
        }
    }
}

impl LinearOperator for StructuredHessian<'_> {
    fn dim(&self) -> usize {
        2 * self.mask.n()
    }

    fn apply(&self, x: &Vector, out: &mut Vector) {
        self.apply_into(x.as_slice(), out.as_mut_slice());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagPreconditioner {
    diag: Vector,
}

impl DiagPreconditioner {
    pub fn new(diag: Vector) -> Self {
        Self { diag }
    }

    pub fn diag(&self) -> &Vector {
        &self.diag
    }

    /// Entrywise `r / diag`.
    pub fn solve(&self, r: &Vector) -> Result<Vector> {
        if r.len() != self.diag.len() {
            return Err(Error::DimensionMismatch {
                expected: self.diag.len(),
                found: r.len(),
            });
        }
        if let Some(index) = self.diag.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroPivot { index });
        }
        Ok(r.component_div(&self.diag))
    }
}

impl Preconditioner for DiagPreconditioner {
    fn apply(&self, r: &Vector, z: &mut Vector) {
        for ((zi, ri), di) in z.iter_mut().zip(r.iter()).zip(self.diag.iter()) {
            *zi = if *di > 0.0 { ri / di } else { *ri };
        }
    }
}

/// Applies the inner preconditioner and then removes the `(e, −e)` component,
/// so preconditioned CG iterates stay in the range of `B`.
#[derive(Clone, Debug)]
pub struct RangeRestricted<P>(pub P);

impl<P: Preconditioner> Preconditioner for RangeRestricted<P> {
    fn apply(&self, r: &Vector, z: &mut Vector) {
        self.0.apply(r, z);
        project_to_range(z.as_mut_slice());
    }
}

/// Removes the null directions of `V` along which the gradient `B X − b` has
/// no exact component.
///
/// Every connected component of the bipartite graph of `Ω`, with row set `R`
/// and column set `K`, gives a null vector `(e_R, −e_K)` of `V`. The gradient
/// has component `|K| − |R|` along it, so for balanced components only
/// rounding noise is left there, and the shifted Newton system would amplify
/// that noise by `1/ε`. Unbalanced components are kept apart from their
/// common sum, whose component vanishes because row and column sums of `X`
/// have the same total. With a connected graph this is [`project_to_range`].
#[derive(Clone, Debug)]
pub struct NullSpaceFilter {
    n: usize,
    /// Group of each of the `2n` nodes (rows first).
    group: Vec<usize>,
    /// Number of nodes per group.
    size: Vec<f64>,
}

impl NullSpaceFilter {
    pub fn new(mask: &BinaryMask) -> Self {
        let n = mask.n();
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for j in 0..n {
            mask.for_each_in_col(j, true, |i| {
                let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
                if a != b {
                    parent[a] = b;
                }
            });
        }
        // balance of each component: rows minus columns
        let roots: Vec<usize> = (0..2 * n).map(|k| find(&mut parent, k)).collect();
        let mut balance = vec![0isize; 2 * n];
        for (k, &r) in roots.iter().enumerate() {
            balance[r] += if k < n { 1 } else { -1 };
        }
        // group 0 collects the unbalanced components
        let mut id = vec![usize::MAX; 2 * n];
        let mut size = vec![0.0];
        let mut group = vec![0; 2 * n];
        for (k, &r) in roots.iter().enumerate() {
            let g = if balance[r] != 0 {
                0
            } else {
                if id[r] == usize::MAX {
                    id[r] = size.len();
                    size.push(0.0);
                }
                id[r]
            };
            group[k] = g;
            size[g] += 1.0;
        }
        Self { n, group, size }
    }

    /// Number of directions removed.
    pub fn rank(&self) -> usize {
        self.size.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn apply(&self, y: &mut [f64]) {
        let n = self.n;
        let mut sums = vec![0.0; self.size.len()];
        for (k, &g) in self.group.iter().enumerate() {
            sums[g] += if k < n { y[k] } else { -y[k] };
        }
        for (s, &m) in sums.iter_mut().zip(&self.size) {
            if m > 0.0 {
                *s /= m;
            }
        }
        for (k, &g) in self.group.iter().enumerate() {
            y[k] -= if k < n { sums[g] } else { -sums[g] };
        }
    }
}

/// Applies the inner preconditioner and then a [`NullSpaceFilter`].
#[derive(Clone, Debug)]
pub struct NullFiltered<'a, P>(pub P, pub &'a NullSpaceFilter);

impl<P: Preconditioner> Preconditioner for NullFiltered<'_, P> {
    fn apply(&self, r: &Vector, z: &mut Vector) {
        self.0.apply(r, z);
        self.1.apply(z.as_mut_slice());
    }
}
