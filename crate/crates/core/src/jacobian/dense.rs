//! Dense reference formulas for projectors onto small polyhedra.
//!
//! Everything here forms explicit matrices and SVD pseudo-inverses; it exists
//! to cross-check the matrix-free operators and is only meant for a few dozen
//! variables.

use nalgebra::{DMatrix, DVector};

use crate::projector::{ssncg1_project, SsnSettings};
use crate::{DenseMatrix, Error, Result};

/// Relative singular value cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;
/// Tolerance for declaring an inequality active.
pub const ACTIVE_TOL: f64 = 1e-8;
/// Largest variable count for the exhaustive active-set oracle.
pub const EXHAUSTIVE_MAX_VARS: usize = 10;

/// `D = {x : A x ≥ b, B x = d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyhedronDense {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub bmat: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl PolyhedronDense {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, bmat: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let nv = a.ncols().max(bmat.ncols());
        let ok = a.nrows() == b.len()
            && bmat.nrows() == d.len()
            && (a.nrows() == 0 || a.ncols() == nv)
            && (bmat.nrows() == 0 || bmat.ncols() == nv);
        if !ok {
            return Err(Error::Invalid("inconsistent polyhedron dimensions".into()));
        }
        Ok(Self { a, b, bmat, d })
    }

    /// The Birkhoff polytope on column-major `vec(X)`: `x ≥ 0` and `B x = (e, e)`.
    pub fn birkhoff(n: usize) -> Self {
        let nv = n * n;
        let mut bmat = DMatrix::zeros(2 * n, nv);
        for j in 0..n {
            for i in 0..n {
                bmat[(i, i + j * n)] = 1.0;
                bmat[(n + j, i + j * n)] = 1.0;
            }
        }
        Self {
            a: DMatrix::identity(nv, nv),
            b: DVector::zeros(nv),
            bmat,
            d: DVector::from_element(2 * n, 1.0),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.a.ncols().max(self.bmat.ncols())
    }

    /// `I(x) = {i : A_i x = b_i}` up to [`ACTIVE_TOL`].
    pub fn active_set(&self, x: &DVector<f64>) -> Vec<usize> {
        let slack = &self.a * x - &self.b;
        (0..slack.len()).filter(|&i| slack[i].abs() <= ACTIVE_TOL).collect()
    }

    fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        let ineq = &self.a * x - &self.b;
        let eq = &self.bmat * x - &self.d;
        ineq.iter().all(|&v| v >= -tol) && eq.iter().all(|&v| v.abs() <= tol)
    }
}

/// Moore-Penrose pseudo-inverse, dropping singular values below
/// `PINV_RTOL · σ_max`.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let cut = PINV_RTOL * smax;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// `Hᵀ (H Hᵀ)† H`, the orthogonal projector onto `Range(Hᵀ)`.
pub fn dense_range_projector(h: &DMatrix<f64>) -> DMatrix<f64> {
    h.transpose() * pinv(&(h * h.transpose())) * h
}

/// `I − Mᵀ(M Mᵀ)† M` with `M` stacking the active rows `A_{I(x)}` over `B`.
///
/// `proj_x` must be `Π_D(x)`; `x` itself only fixes the dimension.
pub fn dense_p0(poly: &PolyhedronDense, x: &DVector<f64>, proj_x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let nv = poly.num_vars();
    for v in [x, proj_x] {
        if v.len() != nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                found: v.len(),
            });
        }
    }
    let active = poly.active_set(proj_x);
    let m = stack_rows(poly, &active);
    Ok(DMatrix::identity(nv, nv) - dense_range_projector(&m))
}

/// `Σ − ΣHᵀ(HΣHᵀ)†HΣ` with `Σ = I − Diag(θ)`.
pub fn dense_p_reduced(theta: &[bool], h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let nv = theta.len();
    if h.ncols() != nv && h.nrows() > 0 {
        return Err(Error::DimensionMismatch {
            expected: nv,
            found: h.ncols(),
        });
    }
    let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
        nv,
        theta.iter().map(|&t| if t { 0.0 } else { 1.0 }),
    ));
    if h.nrows() == 0 {
        return Ok(sigma);
    }
    let hs = h * &sigma;
    Ok(&sigma - hs.transpose() * pinv(&(&hs * h.transpose())) * &hs)
}

fn stack_rows(poly: &PolyhedronDense, active: &[usize]) -> DMatrix<f64> {
    let nv = poly.num_vars();
    let rows = active.len() + poly.bmat.nrows();
    let mut m = DMatrix::zeros(rows, nv);
    for (r, &i) in active.iter().enumerate() {
        m.row_mut(r).copy_from(&poly.a.row(i));
    }
    for r in 0..poly.bmat.nrows() {
        m.row_mut(active.len() + r).copy_from(&poly.bmat.row(r));
    }
    m
}

/// Exact `Π_D(x)` by enumerating candidate active sets.
///
/// For every subset `K` of the inequalities the point is projected onto the
/// affine set `{A_K y = b_K, B y = d}`; among the candidates that lie in `D`,
/// the closest one is the projection since each candidate is a feasible point
/// and the true projection is itself the candidate of its own active set.
/// Exponential in the number of inequalities.
pub fn project_polyhedron_exhaustive(poly: &PolyhedronDense, x: &DVector<f64>) -> Result<DVector<f64>> {
    let nv = poly.num_vars();
    if x.len() != nv {
        return Err(Error::DimensionMismatch {
            expected: nv,
            found: x.len(),
        });
    }
    let m = poly.a.nrows();
    if nv > EXHAUSTIVE_MAX_VARS || m > 20 {
        return Err(Error::Invalid(format!(
            "exhaustive oracle limited to {EXHAUSTIVE_MAX_VARS} variables"
        )));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for subset in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&i| subset >> i & 1 == 1).collect();
        let mat = stack_rows(poly, &active);
        let rhs = DVector::from_iterator(
            mat.nrows(),
            active.iter().map(|&i| poly.b[i]).chain(poly.d.iter().copied()),
        );
        let cand = if mat.nrows() == 0 {
            x.clone()
        } else {
            let resid = &mat * x - &rhs;
            x - mat.transpose() * pinv(&(&mat * mat.transpose())) * resid
        };
        // inconsistent systems give least-squares points that fail feasibility
        if !poly.is_feasible(&cand, 1e-10) {
            continue;
        }
        let dist = (&cand - x).norm();
        if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
            best = Some((dist, cand));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Invalid("polyhedron is empty".into()))
}

/// Reference projection onto the Birkhoff polytope: exhaustive for `n² ≤ 10`,
/// otherwise SSNCG at tolerance 1e-15.
pub fn birkhoff_projection_oracle(g: &DenseMatrix) -> Result<DenseMatrix> {
    let n = crate::check_square(g)?;
    if n * n <= EXHAUSTIVE_MAX_VARS {
        let x = DVector::from_column_slice(g.as_slice());
        let p = project_polyhedron_exhaustive(&PolyhedronDense::birkhoff(n), &x)?;
        return Ok(DenseMatrix::from_column_slice(n, n, p.as_slice()));
    }
    let r = ssncg1_project(g, &SsnSettings::with_tol(1e-15), None)?;
    if r.eta > 1e-12 {
        return Err(Error::Unconverged {
            eta: r.eta,
            required: 1e-12,
        });
    }
    Ok(r.x)
}
