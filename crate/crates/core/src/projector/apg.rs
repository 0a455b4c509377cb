use std::time::Instant;

use super::{shifted_sums, IterationRecord, ProjectionResult};
use crate::linops::{project_to_range, solve_bbt_pinv};
use crate::{check_finite_matrix, check_square, DenseMatrix, Result, Vector};

pub const DEFAULT_APG_MAXIT: usize = 20_000;

/// Accelerated proximal gradient on the dual with function-value restart.
///
/// The majorization `φ̂(y; z) = φ(z) + ⟨∇φ(z), y − z⟩ + ½‖B*(y − z)‖²` is
/// minimized exactly, which amounts to one application of `(BB*)†`.
/// Momentum is reset whenever the dual objective increases.
pub fn apg_project(g: &DenseMatrix, tol_eta: f64, maxit: usize) -> Result<ProjectionResult> {
    let n = check_square(g)?;
    check_finite_matrix(g, "G")?;
    let start = Instant::now();
    let b_norm = ((2 * n) as f64).sqrt();
    let gs = g.as_slice();

    let mut zbuf = DenseMatrix::zeros(n, n);
    let mut grad = Vector::zeros(2 * n);
    // φ up to the constant −½‖G‖², which cancels in comparisons
    let eval = |y: &Vector, zbuf: &mut DenseMatrix, grad: &mut Vector| {
        shifted_sums(gs, n, y.as_slice(), zbuf.as_mut_slice(), grad.as_mut_slice()) - y.sum()
    };

    let mut y = Vector::zeros(2 * n);
    let mut phi_prev = eval(&y, &mut zbuf, &mut grad);
    let mut eta = grad.norm() / (1.0 + b_norm);
    let mut y_prev = y.clone();
    let mut z = y.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let mut converged = eta <= tol_eta;
    let mut iterations = 0;

    while !converged && iterations < maxit {
        let grad_z = if iterations == 0 {
            grad.clone()
        } else {
            let mut gz = Vector::zeros(2 * n);
            eval(&z, &mut zbuf, &mut gz);
            gz
        };
        let mut step = solve_bbt_pinv(&grad_z)?;
        project_to_range(step.as_mut_slice());
        y = &z - step;
        let phi = eval(&y, &mut zbuf, &mut grad);
        iterations += 1;
        let gnorm = grad.norm();
        trace.push(IterationRecord {
            eta,
            grad_norm: gnorm,
            step: 1.0,
            phi_decrease: phi - phi_prev,
            ..Default::default()
        });
        eta = gnorm / (1.0 + b_norm);
        if eta <= tol_eta {
            converged = true;
            break;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if phi > phi_prev {
            t = 1.0;
            z = y.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            z = &y + (&y - &y_prev) * beta;
            t = t_next;
        }
        y_prev.copy_from(&y);
        phi_prev = phi;
    }

    // zbuf and grad hold the evaluation at y
    zbuf.apply(|v| *v = v.max(0.0));
    Ok(ProjectionResult {
        x: zbuf,
        y,
        eta,
        eta_p: eta,
        eta_c: 0.0,
        iterations,
        total_cg_iters: 0,
        linesearch_steps: 0,
        wall_time: start.elapsed(),
        converged,
        trace,
    })
}
