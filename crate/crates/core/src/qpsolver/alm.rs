use std::time::{Duration, Instant};

use super::ssn2::{ssncg2_solve, Ssn2Settings};
use super::{support_function_value, QOperator};
use crate::projector::{ssncg1_project, SsnSettings};
use crate::{check_finite_matrix, check_square, DenseMatrix, Error, Result, Vector};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AlmSettings {
    pub sigma0: f64,
    pub sigma_max: f64,
    /// Growth factor applied when `η` fails to halve over an outer step.
    pub sigma_factor: f64,
    pub max_outer: usize,
    /// Outer cap used instead of `max_outer` when `𝒬 = 0`.
    pub max_outer_zero_q: usize,
    /// Exponent `p` of the summable tolerances `(1 + ‖G‖)/(k + 1)^p`.
    pub summable_exponent: f64,
    /// Run the iteration on `𝒬/c, G/c` with `c` the largest eigenvalue of
    /// `𝒬`. Minimizers are unchanged and `σ` becomes scale-free.
    pub normalize: bool,
    #[serde(with = "opt_secs")]
    pub time_limit: Option<Duration>,
    pub inner: Ssn2Settings,
}

impl Default for AlmSettings {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma_max: 1e6,
            sigma_factor: 3.0,
            max_outer: 500,
            max_outer_zero_q: 5000,
            summable_exponent: 1.5,
            normalize: true,
            time_limit: None,
            inner: Ssn2Settings::default(),
        }
    }
}

impl AlmSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSettings(m.to_string()));
        if !(self.sigma0 > 0.0 && self.sigma_max >= self.sigma0 && self.sigma_factor >= 1.0) {
            return bad("need sigma0 > 0, sigma_max >= sigma0 and sigma_factor >= 1");
        }
        if !(self.summable_exponent > 1.0) {
            return bad("summable_exponent must exceed 1");
        }
        self.inner.proj.validate()
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let secs = Option::<f64>::deserialize(d)?;
        secs.map(|s| Duration::try_from_secs_f64(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// One outer iteration, with the stopping-test quantities as evaluated.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AlmRecord {
    pub k: usize,
    pub sigma: f64,
    pub eps: f64,
    /// `Ψ_k − f_k(X^{k+1}) = ½⟨W − X^{k+1}, 𝒬(W − X^{k+1})⟩`.
    pub gap: f64,
    /// `‖X^{k+1} − Π(X^{k+1})‖`.
    pub gamma: f64,
    pub grad_f_norm: f64,
    pub step_norm: f64,
    pub criterion_a: bool,
    pub criterion_b: bool,
    pub inner_iters: usize,
    pub eta: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// `‖Z + 𝒬W + G‖`.
    pub dual_infeasibility: f64,
}

#[derive(Clone, Debug)]
pub struct QpResult {
    pub x: DenseMatrix,
    pub w: DenseMatrix,
    pub z: DenseMatrix,
    /// `½⟨X, 𝒬X⟩ + ⟨G, X⟩`.
    pub objective: f64,
    /// `−⟨Z, Π⟩ − ½⟨W, 𝒬W⟩` at the last dual iterate.
    pub dual_objective: f64,
    pub eta: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub wall_time: Duration,
    pub converged: bool,
    /// Divisor applied to `𝒬` and `G` internally (`1` without normalization).
    pub scale: f64,
    /// Per-iteration records, in the units of the normalized problem.
    pub history: Vec<AlmRecord>,
}

/// `‖X − Π(X − (𝒬X + G))‖ / (1 + ‖X‖ + ‖𝒬X + G‖)`.
///
/// Returns the residual and the dual vector of the projection for reuse as
/// a warm start.
pub fn qp_kkt_residual(
    g: &DenseMatrix,
    q: &QOperator,
    x: &DenseMatrix,
    warm: Option<&Vector>,
) -> Result<(f64, Vector)> {
    let n = check_square(x)?;
    if g.shape() != (n, n) || q.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.nrows(),
        });
    }
    let grad = q.apply_unchecked(x) + g;
    let r = ssncg1_project(&(x - &grad), &SsnSettings::with_tol(1e-15), warm)?;
    let eta = (x - &r.x).norm() / (1.0 + x.norm() + grad.norm());
    Ok((eta, r.y))
}

/// Augmented Lagrangian method on the dual of
/// `min ½⟨X, 𝒬X⟩ + ⟨G, X⟩ s.t. X ∈ 𝔅n`.
///
/// Each subproblem is solved by [`ssncg2_solve`] until both stopping
/// criteria (A) and (B) hold for the candidate `X^{k+1} = Π(Z(W))`, or the
/// candidate already meets `tol_eta`. The inner projections and the Newton
/// variable are warm-started across iterations.
pub fn alm_solve(g: &DenseMatrix, q: &QOperator, tol_eta: f64, settings: &AlmSettings) -> Result<QpResult> {
    settings.validate()?;
    let n = check_square(g)?;
    check_finite_matrix(g, "G")?;
    if q.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.n(),
        });
    }
    let start = Instant::now();
    // original data stay in `g_orig`, `q_orig` for the residual test
    let (g_orig, q_orig) = (g, q);
    let scale = if settings.normalize {
        q.spectral_norm_estimate(100)
    } else {
        1.0
    };
    let scaled = q
        .scaled(scale)
        .filter(|_| scale.is_finite() && scale > 0.0 && scale != 1.0);
    let (scale, q) = match &scaled {
        Some(qs) => (scale, qs),
        None => (1.0, q),
    };
    let g_scaled = g / scale;
    let g = &g_scaled;
    let g_norm = g.norm();
    let max_outer = if q.is_zero() {
        settings.max_outer.max(settings.max_outer_zero_q)
    } else {
        settings.max_outer
    };

    let mut x = DenseMatrix::from_element(n, n, 1.0 / n as f64);
    let mut w = DenseMatrix::zeros(n, n);
    let mut z = DenseMatrix::zeros(n, n);
    let mut sigma = settings.sigma0;
    let mut proj_y: Option<Vector> = None;
    let mut eta_y: Option<Vector> = None;
    let (mut eta, y) = qp_kkt_residual(g_orig, q_orig, &x, None)?;
    eta_y = eta_y.or(Some(y));
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut dual_obj = f64::NEG_INFINITY;
    let mut converged = eta <= tol_eta;

    while !converged && history.len() < max_outer {
        if settings.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
        let k = history.len();
        let eps = (1.0 + g_norm) / ((k + 1) as f64).powf(settings.summable_exponent);
        let root = (2.0 * sigma).sqrt();
        let mut last = None;
        let mut candidate_eta = f64::INFINITY;

        let stop = |e: &super::PsiEval, w: &DenseMatrix| -> Result<bool> {
            let pi = &e.pi;
            let (eta_c, y) = qp_kkt_residual(g_orig, q_orig, pi, eta_y.as_ref())?;
            eta_y = Some(y);
            candidate_eta = eta_c;
            let gap = 0.5 * (w - pi).dot(&e.grad);
            let gamma = {
                let r = ssncg1_project(pi, &SsnSettings::with_tol(1e-15), None)?;
                (pi - r.x).norm()
            };
            // 𝒬Π = 𝒬W − ∇ψ
            let q_pi = &e.qw - &e.grad;
            let grad_f = -(q_pi + g) - (pi - &x) / sigma;
            let gf = grad_f.norm();
            let step = (pi - &x).norm();
            let ratio = |num: f64| if gf > 0.0 { num / (root * gf) } else { f64::INFINITY };
            let alpha = 1f64.min(sigma.sqrt()).min(ratio(eps));
            let beta = 1f64.min(sigma.sqrt()).min(ratio(eps * step));
            let a = gap <= eps * eps / (2.0 * sigma) && gamma <= alpha * eps / root;
            let b = gap <= (eps * step).powi(2) / (2.0 * sigma) && gamma <= beta * eps * step / root;
            last = Some((gap, gamma, gf, step, a, b));
            Ok(eta_c <= tol_eta || (a && b))
        };
        let out = ssncg2_solve(&x, sigma, g, q, &settings.inner, &w, proj_y.as_ref(), stop)?;
        let (gap, gamma, gf, step, a, b) = last.expect("stopping rule evaluated at least once");
        inner_total += out.newton_iters;
        proj_y = Some(out.eval.proj.y.clone());

        let x_next = out.eval.pi.clone();
        let dual_infeasibility = step / sigma;
        w = out.w;
        z = out.z;
        let eta_next = candidate_eta;
        dual_obj = -support_function_value(&z, &x_next) - 0.5 * w.dot(&out.eval.qw);
        let primal_obj = 0.5 * x_next.dot(&q.apply_unchecked(&x_next)) + g.dot(&x_next);
        history.push(AlmRecord {
            k,
            sigma,
            eps,
            gap,
            gamma,
            grad_f_norm: gf,
            step_norm: step,
            criterion_a: a,
            criterion_b: b,
            inner_iters: out.newton_iters,
            eta: eta_next,
            primal_obj,
            dual_obj,
            dual_infeasibility,
        });
        log::debug!(
            "alm k={k} sigma={sigma:.1e} eta={eta_next:.3e} inner={} A={a} B={b}",
            out.newton_iters
        );
        if eta_next > 0.5 * eta {
            sigma = (sigma * settings.sigma_factor).min(settings.sigma_max);
        }
        x = x_next;
        eta = eta_next;
        converged = eta <= tol_eta;
    }

    let objective = 0.5 * x.dot(&q_orig.apply_unchecked(&x)) + g_orig.dot(&x);
    Ok(QpResult {
        x,
        w,
        z: z * scale,
        objective,
        dual_objective: dual_obj * scale,
        eta,
        outer_iters: history.len(),
        inner_iters: inner_total,
        wall_time: start.elapsed(),
        converged,
        scale,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobian::dense::birkhoff_projection_oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_q_reduces_to_projection() {
        let g = DenseMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.0]);
        let r = alm_solve(&g, &QOperator::Identity { n: 2 }, 1e-10, &AlmSettings::default()).unwrap();
        assert!(r.converged);
        assert!((&r.x - DenseMatrix::identity(2, 2)).norm() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g0 = DenseMatrix::from_fn(8, 8, |_, _| StandardNormal.sample(&mut rng));
        let r = alm_solve(&-&g0, &QOperator::Identity { n: 8 }, 1e-10, &AlmSettings::default()).unwrap();
        let expect = birkhoff_projection_oracle(&g0).unwrap();
        assert!(r.converged);
        assert!((&r.x - &expect).norm() <= 1e-6 * (1.0 + expect.norm()));
    }

    #[test]
    fn zero_q_finds_assignment_vertex() {
        // min ⟨G, X⟩ over 𝔅₃ with a unique optimal permutation (2, 0, 1)
        let g = DenseMatrix::from_row_slice(3, 3, &[4.0, 3.0, 0.0, 1.0, 5.0, 6.0, 7.0, 2.0, 8.0]);
        let r = alm_solve(&g, &QOperator::Zero { n: 3 }, 1e-12, &AlmSettings::default()).unwrap();
        assert!(r.converged, "eta = {}", r.eta);
        let mut p = DenseMatrix::zeros(3, 3);
        p[(0, 2)] = 1.0;
        p[(1, 0)] = 1.0;
        p[(2, 1)] = 1.0;
        assert!((&r.x - p).norm() < 1e-8);
        assert!(r.history.iter().all(|h| h.inner_iters == 0));
    }

    #[test]
    fn history_replays_criteria() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let l = DenseMatrix::from_fn(n * n, n * n, |_, _| StandardNormal.sample(&mut rng));
        let q = QOperator::dense(&l * l.transpose() / (n * n) as f64).unwrap();
        let g = DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let r = alm_solve(&g, &q, 1e-9, &AlmSettings::default()).unwrap();
        assert!(r.converged, "eta = {}", r.eta);
        let mut sigma = 1.0;
        for h in &r.history {
            assert!(h.sigma >= sigma);
            sigma = h.sigma;
            let root = (2.0 * h.sigma).sqrt();
            let alpha = 1f64.min(h.sigma.sqrt()).min(h.eps / (root * h.grad_f_norm));
            let a = h.gap <= h.eps * h.eps / (2.0 * h.sigma) && h.gamma <= alpha * h.eps / root;
            assert_eq!(a, h.criterion_a);
        }
        assert!((r.objective - r.dual_objective).abs() <= 1e-5 * (1.0 + r.objective.abs()));
    }

    #[test]
    fn normalization_preserves_the_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 5;
        let l = DenseMatrix::from_fn(n * n, n * n, |_, _| StandardNormal.sample(&mut rng));
        let qd = &l * l.transpose() * 0.5;
        let g = DenseMatrix::from_fn(n, n, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            4.0 * v
        });
        let q = QOperator::dense(qd).unwrap();
        let on = alm_solve(&g, &q, 1e-8, &AlmSettings::default()).unwrap();
        let off = alm_solve(
            &g,
            &q,
            1e-8,
            &AlmSettings {
                normalize: false,
                ..AlmSettings::default()
            },
        )
        .unwrap();
        assert!(on.converged && off.converged);
        assert!(on.scale > 1.0 && off.scale == 1.0);
        assert!((&on.x - &off.x).norm() <= 1e-5);
        assert!((on.objective - off.objective).abs() <= 1e-6 * (1.0 + off.objective.abs()));
        // dual objective is reported in the original units
        assert!((on.objective - on.dual_objective).abs() <= 1e-5 * (1.0 + on.objective.abs()));
    }

    #[test]
    fn rejects_mismatched_input() {
        assert!(alm_solve(
            &DenseMatrix::zeros(3, 3),
            &QOperator::Identity { n: 2 },
            1e-6,
            &AlmSettings::default()
        )
        .is_err());
        let bad = AlmSettings {
            sigma0: 0.0,
            ..AlmSettings::default()
        };
        assert!(alm_solve(&DenseMatrix::zeros(2, 2), &QOperator::Identity { n: 2 }, 1e-6, &bad).is_err());
    }
}
