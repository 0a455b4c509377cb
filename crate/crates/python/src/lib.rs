//! Python bindings: matrices cross the boundary as lists of rows.

use birkhoff::instances::{build_relaxation, gaussian_kernel, make_q_operator, parse_libsvm, parse_qaplib_named};
use birkhoff::jacobian::build_hs_jacobian;
use birkhoff::projector::{apg_project, ssncg1_project, ProjectionResult, SsnSettings, DEFAULT_APG_MAXIT};
use birkhoff::qpsolver::{alm_solve, AlmSettings};
use birkhoff::DenseMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn to_matrix(rows: &[Vec<f64>]) -> Result<DenseMatrix, String> {
    let n = rows.len();
    if n == 0 {
        return Err("matrix is empty".into());
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(format!("row {i} has {} entries, expected {n}", r.len()));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &DenseMatrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    to_matrix(rows).map_err(PyValueError::new_err)
}

fn py_err(e: birkhoff::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ssncg(g: &DenseMatrix, tol: f64, maxit: Option<usize>) -> birkhoff::Result<ProjectionResult> {
    let mut s = SsnSettings::with_tol(tol);
    if let Some(m) = maxit {
        s.maxit = m;
    }
    ssncg1_project(g, &s, None)
}

/// Projects `g` onto the doubly stochastic matrices.
///
/// Returns a dict with `x`, `y` (row then column multipliers), `eta`,
/// `eta_p`, `eta_c`, `iterations`, `cg_iters`, `converged` and `time_s`.
#[pyfunction]
#[pyo3(signature = (g, tol = 1e-9, solver = "ssncg", maxit = None))]
fn project<'py>(
    py: Python<'py>,
    g: Rows,
    tol: f64,
    solver: &str,
    maxit: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let g = matrix(&g)?;
    let r = py
        .detach(|| match solver {
            "ssncg" => Ok(ssncg(&g, tol, maxit)),
            "apg" => Ok(apg_project(&g, tol, maxit.unwrap_or(DEFAULT_APG_MAXIT))),
            other => Err(format!("unknown solver {other:?} (expected \"ssncg\" or \"apg\")")),
        })
        .map_err(PyValueError::new_err)?
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x", to_rows(&r.x))?;
    d.set_item("y", r.y.as_slice().to_vec())?;
    d.set_item("eta", r.eta)?;
    d.set_item("eta_p", r.eta_p)?;
    d.set_item("eta_c", r.eta_c)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("cg_iters", r.total_cg_iters)?;
    d.set_item("converged", r.converged)?;
    d.set_item("time_s", r.wall_time.as_secs_f64())?;
    Ok(d)
}

/// Applies the HS-Jacobian of the projector at `g` to each matrix in `hs`.
#[pyfunction]
#[pyo3(signature = (g, hs, tol = 1e-15))]
fn hs_jacobian_apply(py: Python<'_>, g: Rows, hs: Vec<Rows>, tol: f64) -> PyResult<Vec<Rows>> {
    let g = matrix(&g)?;
    let hs = hs.iter().map(|h| matrix(h)).collect::<PyResult<Vec<_>>>()?;
    py.detach(|| {
        let p = ssncg(&g, tol, None)?;
        let op = build_hs_jacobian(&g, &p)?;
        hs.iter()
            .map(|h| op.apply(h).map(|m| to_rows(&m)))
            .collect::<birkhoff::Result<Vec<_>>>()
    })
    .map_err(py_err)
}

/// Solves the convex relaxation of a QAPLIB instance given as file text.
///
/// Returns a dict with `name`, `n`, `x`, `bound` (`<X, QX>`), `lower_bound`,
/// `lp_value`, `eta`, `outer_iters`, `converged` and `time_s`.
#[pyfunction]
#[pyo3(signature = (text, name = "instance", tol = 1e-7, max_outer = None))]
fn qap_relaxation<'py>(
    py: Python<'py>,
    text: &str,
    name: &str,
    tol: f64,
    max_outer: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = parse_qaplib_named(text, name).map_err(py_err)?;
    let mut settings = AlmSettings::default();
    if let Some(m) = max_outer {
        settings.max_outer = m;
    }
    let (res, quad, lp) = py
        .detach(|| {
            let rd = build_relaxation(&inst)?;
            let q = make_q_operator(&rd, &inst)?;
            let res = alm_solve(&DenseMatrix::zeros(inst.n, inst.n), &q, tol, &settings)?;
            let quad = q.quad(&res.x)?;
            Ok((res, quad, rd.lp_value()))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("name", &inst.name)?;
    d.set_item("n", inst.n)?;
    d.set_item("x", to_rows(&res.x))?;
    d.set_item("bound", quad)?;
    d.set_item("lower_bound", quad + lp)?;
    d.set_item("lp_value", lp)?;
    d.set_item("eta", res.eta)?;
    d.set_item("outer_iters", res.outer_iters)?;
    d.set_item("converged", res.converged)?;
    d.set_item("time_s", res.wall_time.as_secs_f64())?;
    Ok(d)
}

/// `n × n` matrix with i.i.d. standard normal entries from a seeded generator.
#[pyfunction]
fn random_gaussian(n: usize, seed: u64) -> PyResult<Rows> {
    birkhoff::instances::random_gaussian(n, seed)
        .map(|m| to_rows(&m))
        .map_err(py_err)
}

/// Gaussian kernel matrix of the rows of a LIBSVM-format feature file.
#[pyfunction]
fn kernel_from_libsvm(text: &str) -> PyResult<Rows> {
    let fs = parse_libsvm(text).map_err(py_err)?;
    gaussian_kernel(&fs).map(|m| to_rows(&m)).map_err(py_err)
}

#[pymodule]
fn birkhoff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(hs_jacobian_apply, m)?)?;
    m.add_function(wrap_pyfunction!(qap_relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(random_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_from_libsvm, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
