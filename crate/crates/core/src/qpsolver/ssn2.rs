use super::krylov::{bicgstab, q_cg, KrylovOutcome};
use super::{psi_value_and_grad, PsiEval, QOperator};
use crate::jacobian::{build_hs_jacobian, HsJacobianOp};
use crate::projector::SsnSettings;
use crate::{DenseMatrix, Error, Result, Vector};

/// Parameters of the inner Newton-CG method on `ψ`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Ssn2Settings {
    pub mu: f64,
    pub delta: f64,
    pub tau: f64,
    pub eta_bar: f64,
    pub max_newton: usize,
    pub cg_maxit: usize,
    pub max_backtracks: usize,
    /// Default stopping rule on `‖∇ψ‖` when the caller supplies none.
    pub grad_tol: f64,
    pub proj: SsnSettings,
}

impl Default for Ssn2Settings {
    fn default() -> Self {
        Self {
            mu: 1e-4,
            delta: 0.5,
            tau: 0.5,
            eta_bar: 1e-2,
            max_newton: 50,
            cg_maxit: 200,
            max_backtracks: 30,
            grad_tol: 1e-10,
            proj: SsnSettings::with_tol(1e-14),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ssn2Outcome {
    pub w: DenseMatrix,
    /// `σ⁻¹(Z(W) − Π(Z(W)))`.
    pub z: DenseMatrix,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub backtracks: usize,
    /// Number of directions that needed the nonsymmetric fallback.
    pub fallbacks: usize,
    /// The stopping rule accepted the final iterate.
    pub accepted: bool,
    pub eval: PsiEval,
}

/// Approximate solution of `(I + σ𝒫𝒬) dW = rhs`.
///
/// Uses CG in the `𝒬` semi-inner product and switches to BiCGSTAB if that
/// degenerates. `tol` bounds `‖𝒬(rhs − (I + σ𝒫𝒬) dW)‖`.
pub fn newton_direction(
    q: &QOperator,
    p: &HsJacobianOp,
    sigma: f64,
    rhs: &DenseMatrix,
    tol: f64,
    maxit: usize,
) -> Result<(KrylovOutcome, bool)> {
    let apply_q = |x: &DenseMatrix| q.apply_unchecked(x);
    let apply_t = |x: &DenseMatrix| -> Result<DenseMatrix> { Ok(x + p.apply(&q.apply_unchecked(x))? * sigma) };
    let out = q_cg(&apply_q, &apply_t, rhs, tol, maxit)?;
    if out.converged || !out.breakdown {
        return Ok((out, false));
    }
    let fallback = bicgstab(&apply_t, &apply_q, rhs, tol, maxit)?;
    Ok((fallback, true))
}

/// Semismooth Newton-CG on `ψ` starting from `w0`.
///
/// `stop` is called on every iterate (before a Newton step is taken) and
/// ends the solve when it returns `true`. With `𝒬 = 0` the gradient vanishes
/// identically, so the first evaluation is returned as is.
#[allow(clippy::too_many_arguments)]
pub fn ssncg2_solve(
    xhat: &DenseMatrix,
    sigma: f64,
    g: &DenseMatrix,
    q: &QOperator,
    settings: &Ssn2Settings,
    w0: &DenseMatrix,
    warm_y: Option<&Vector>,
    mut stop: impl FnMut(&PsiEval, &DenseMatrix) -> Result<bool>,
) -> Result<Ssn2Outcome> {
    let n = q.n();
    let mut w = if q.is_zero() {
        DenseMatrix::zeros(n, n)
    } else {
        w0.clone()
    };
    let mut eval = psi_value_and_grad(&w, xhat, sigma, g, q, warm_y, &settings.proj)?;
    let mut newton_iters = 0;
    let mut cg_iters = 0;
    let mut backtracks = 0;
    let mut fallbacks = 0;
    let mut accepted = false;

    loop {
        if stop(&eval, &w)? {
            accepted = true;
            break;
        }
        let gnorm = eval.grad.norm();
        if q.is_zero() || gnorm == 0.0 || newton_iters >= settings.max_newton {
            break;
        }
        let p = build_hs_jacobian(&eval.zw, &eval.proj)?;
        let rhs = &eval.pi - &w;
        let tol = settings.eta_bar.min(gnorm.powf(1.0 + settings.tau));
        let (dir, fell_back) = newton_direction(q, &p, sigma, &rhs, tol, settings.cg_maxit)?;
        cg_iters += dir.iters;
        fallbacks += usize::from(fell_back);
        let mut d = dir.solution;
        let mut gd = eval.grad.dot(&d);
        if !(gd < 0.0) {
            d = -&eval.grad;
            gd = -gnorm * gnorm;
        }

        let noise = 1e-13 * (1.0 + eval.psi.abs());
        let mut alpha = 1.0;
        let mut next = None;
        for m in 0..=settings.max_backtracks {
            let wt = &w + &d * alpha;
            let et = psi_value_and_grad(&wt, xhat, sigma, g, q, Some(&eval.proj.y), &settings.proj)?;
            if et.psi <= eval.psi + settings.mu * alpha * gd + noise {
                backtracks += m;
                next = Some((wt, et));
                break;
            }
            alpha *= settings.delta;
        }
        let Some((wt, et)) = next else {
            log::warn!("ssncg2: line search failed at iteration {newton_iters}, |grad| = {gnorm:.3e}");
            break;
        };
        newton_iters += 1;
        log::debug!(
            "ssncg2 it={newton_iters} psi={:.6e} |grad|={gnorm:.3e} cg={} alpha={alpha}",
            et.psi,
            dir.iters
        );
        w = wt;
        eval = et;
    }
    if !eval.psi.is_finite() {
        return Err(Error::NonFinite("psi"));
    }
    let z = (&eval.zw - &eval.pi) / sigma;
    Ok(Ssn2Outcome {
        w,
        z,
        newton_iters,
        cg_iters,
        backtracks,
        fallbacks,
        accepted,
        eval,
    })
}

/// Stopping rule `‖∇ψ(W)‖ ≤ tol`.
#[cfg(test)]
pub(crate) fn grad_norm_rule(tol: f64) -> impl FnMut(&PsiEval, &DenseMatrix) -> Result<bool> {
    move |e, _| Ok(e.grad.norm() <= tol)
}
