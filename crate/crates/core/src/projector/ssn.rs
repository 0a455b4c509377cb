use std::time::{Duration, Instant};

use super::{shifted_sums, IterationRecord, ProjectionResult};
use crate::linops::{
    pcg_solve, project_to_range, row_col_sums, shifted_into, solve_bbt_pinv, BinaryMask, NullFiltered, NullSpaceFilter,
    StructuredHessian,
};
use crate::{check_finite_matrix, check_square, DenseMatrix, Error, Result, Vector};

/// Parameters of the dual semismooth Newton-CG projector.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SsnSettings {
    /// Armijo constant μ ∈ (0, ½).
    pub mu: f64,
    /// Backtracking factor δ ∈ (0, 1).
    pub delta: f64,
    /// CG accuracy exponent τ ∈ (0, 1].
    pub tau: f64,
    /// CG accuracy cap η̄ ∈ (0, 1).
    pub eta_bar: f64,
    /// Shift parameters: `ε_j = τ₁ min(τ₂, ‖∇φ‖)`.
    pub tau1: f64,
    pub tau2: f64,
    pub tol_eta: f64,
    pub maxit: usize,
    pub cg_maxit: usize,
    pub max_backtracks: usize,
    /// Stop when the best residual, once near the rounding floor, has not
    /// improved for this many iterations.
    pub stall_window: usize,
    #[serde(with = "opt_secs")]
    pub time_limit: Option<Duration>,
}

impl Default for SsnSettings {
    fn default() -> Self {
        Self {
            mu: 1e-4,
            delta: 0.5,
            tau: 0.5,
            eta_bar: 1e-2,
            tau1: 1e-3,
            tau2: 0.1,
            tol_eta: 1e-9,
            maxit: 1000,
            cg_maxit: crate::linops::DEFAULT_PCG_MAXIT,
            max_backtracks: 50,
            stall_window: 8,
            time_limit: None,
        }
    }
}

impl SsnSettings {
    pub fn with_tol(tol_eta: f64) -> Self {
        Self {
            tol_eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        let bad = |what: &str| Err(Error::InvalidSettings(what.to_string()));
        if !open(self.mu, 0.0, 0.5) {
            return bad("mu must lie in (0, 1/2)");
        }
        if !open(self.delta, 0.0, 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !open(self.eta_bar, 0.0, 1.0) || !open(self.tau1, 0.0, 1.0) || !open(self.tau2, 0.0, 1.0) {
            return bad("eta_bar, tau1 and tau2 must lie in (0, 1)");
        }
        if !(self.tol_eta >= 0.0) {
            return bad("tol_eta must be nonnegative");
        }
        if self.cg_maxit == 0 || self.stall_window == 0 {
            return bad("cg_maxit and stall_window must be positive");
        }
        Ok(())
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

/// Projects `G` onto the Birkhoff polytope with the dual semismooth Newton-CG
/// method.
///
/// Each iteration solves `(V + εI) d = −∇φ(y)` by preconditioned CG inside
/// `Range(B)` and backtracks on `φ`. When the residual stalls at the
/// floating-point floor, the best iterate is returned with
/// `converged = false` instead of looping to `maxit`.
pub fn ssncg1_project(
    g: &DenseMatrix,
    settings: &SsnSettings,
    warm_start: Option<&Vector>,
) -> Result<ProjectionResult> {
    settings.validate()?;
    let n = check_square(g)?;
    check_finite_matrix(g, "G")?;
    let start = Instant::now();
    let b_norm = ((2 * n) as f64).sqrt();
    let floor = roundoff_floor(g);

    let mut y = match warm_start {
        Some(w) if w.len() != 2 * n => {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                found: w.len(),
            })
        }
        Some(w) if !w.iter().all(|v| v.is_finite()) => return Err(Error::NonFinite("warm start")),
        Some(w) => w.clone(),
        None => Vector::zeros(2 * n),
    };
    project_to_range(y.as_mut_slice());

    let gs = g.as_slice();
    let mut z = DenseMatrix::zeros(n, n);
    let mut grad = Vector::zeros(2 * n);
    let phi_start = shifted_sums(gs, n, y.as_slice(), z.as_mut_slice(), grad.as_mut_slice()) - y.sum();
    if warm_start.is_some() || has_empty_line(&z) {
        // A warm start far from the solution, or a start where some row or
        // column of X vanishes, leaves the Newton matrix nearly singular and
        // the method crawls. The affine start removes the offsets exactly;
        // keep whichever point has the lower dual objective.
        let mut best_phi = phi_start;
        for mut cand in [affine_start(g), max_start(g)].into_iter().flatten() {
            project_to_range(cand.as_mut_slice());
            let mut z_c = DenseMatrix::zeros(n, n);
            let mut grad_c = Vector::zeros(2 * n);
            let phi_c = shifted_sums(gs, n, cand.as_slice(), z_c.as_mut_slice(), grad_c.as_mut_slice()) - cand.sum();
            if phi_c < best_phi {
                log::debug!("ssncg1: alternative start ({phi_c:.6e} < {best_phi:.6e})");
                best_phi = phi_c;
                y = cand;
                z = z_c;
                grad = grad_c;
            }
        }
    }

    let mut z_trial = DenseMatrix::zeros(n, n);
    let mut grad_trial = Vector::zeros(2 * n);
    let mut y_trial = Vector::zeros(2 * n);

    let mut trace = Vec::new();
    let mut total_cg = 0;
    let mut backtracks_total = 0;
    let mut best = (f64::INFINITY, y.clone());
    let mut since_best = 0;
    let mut converged = false;

    loop {
        let gnorm = grad.norm();
        let eta = gnorm / (1.0 + b_norm);
        if eta < best.0 {
            best = (eta, y.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if eta <= settings.tol_eta {
            converged = true;
            break;
        }
        if trace.len() >= settings.maxit
            || (since_best >= settings.stall_window && best.0 <= floor)
            || settings.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            break;
        }

        let mask = BinaryMask::from_matrix(&z, |v| v >= 0.0);
        let shift = settings.tau1 * settings.tau2.min(gnorm);
        let hess = StructuredHessian::new(&mask, shift);
        let filter = NullSpaceFilter::new(&mask);
        let precond = NullFiltered(hess.preconditioner(), &filter);
        let mut rhs = -&grad;
        filter.apply(rhs.as_mut_slice());
        let cg_tol = settings.eta_bar.min(gnorm.powf(1.0 + settings.tau)) / gnorm;
        let cg = pcg_solve(&hess, &rhs, cg_tol, settings.cg_maxit, Some(&precond))?;
        total_cg += cg.iters;
        let mut d = cg.solution;
        filter.apply(d.as_mut_slice());
        let mut gd = grad.dot(&d);
        if !(gd < 0.0) {
            // CG produced no descent (only possible under severe roundoff)
            d = rhs.clone();
            gd = -gnorm * gnorm;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for m in 0..=settings.max_backtracks {
            y_trial.copy_from(&y);
            y_trial.axpy(alpha, &d, 1.0);
            let decrease = trial_decrease(gs, n, &z, &y_trial, &mut z_trial, &mut grad_trial, alpha * gd);
            if decrease <= settings.mu * alpha * gd {
                accepted = Some((m, decrease));
                break;
            }
            alpha *= settings.delta;
        }
        let Some((m, decrease)) = accepted else {
            if eta <= floor.max(1e-10) {
                // roundoff floor: keep the best iterate found so far
                break;
            }
            return Err(Error::LineSearchFailed {
                iteration: trace.len(),
                backtracks: settings.max_backtracks,
            });
        };
        backtracks_total += m;
        trace.push(IterationRecord {
            eta,
            grad_norm: gnorm,
            cg_iters: cg.iters,
            cg_relres: cg.relres,
            shift,
            step: alpha,
            directional: gd,
            phi_decrease: decrease,
            backtracks: m,
        });
        std::mem::swap(&mut y, &mut y_trial);
        std::mem::swap(&mut z, &mut z_trial);
        std::mem::swap(&mut grad, &mut grad_trial);
        log::debug!(
            "ssncg1 it={} eta={:.3e} cg={} alpha={}",
            trace.len(),
            eta,
            cg.iters,
            alpha
        );
    }

    if !converged && best.0 < grad.norm() / (1.0 + b_norm) {
        y = best.1;
        shifted_sums(gs, n, y.as_slice(), z.as_mut_slice(), grad.as_mut_slice());
    }
    let eta_p = grad.norm() / (1.0 + b_norm);
    z.apply(|v| *v = v.max(0.0));
    Ok(ProjectionResult {
        x: z,
        y,
        eta: eta_p,
        eta_p,
        eta_c: 0.0,
        iterations: trace.len(),
        total_cg_iters: total_cg,
        linesearch_steps: backtracks_total,
        wall_time: start.elapsed(),
        converged,
        trace,
    })
}

/// Residual level below which rounding in `G + B*y` can dominate. Only
/// there is a run of non-improving iterations treated as a stall; farther
/// out `η` may rise for a while as `φ` decreases.
fn roundoff_floor(g: &DenseMatrix) -> f64 {
    1e-12 * (1.0 + g.amax())
}

/// `(BB*)†(b − BG)`: the multiplier when no bound is active.
fn affine_start(g: &DenseMatrix) -> Option<Vector> {
    let n = g.nrows();
    let mut sums = vec![0.0; 2 * n];
    row_col_sums(g.as_slice(), n, |v| v, &mut sums);
    let r = Vector::from_iterator(2 * n, sums.iter().map(|s| 1.0 - s));
    solve_bbt_pinv(&r).ok()
}

/// Shifts that bring the largest entry of every row and column to zero.
fn max_start(g: &DenseMatrix) -> Option<Vector> {
    let n = g.nrows();
    let mut y = Vector::zeros(2 * n);
    for i in 0..n {
        y[i] = -g.row(i).max();
    }
    for j in 0..n {
        y[n + j] = -(0..n).map(|i| g[(i, j)] + y[i]).fold(f64::NEG_INFINITY, f64::max);
    }
    y.iter().all(|v| v.is_finite()).then_some(y)
}

/// Some row or column of `z` has no nonnegative entry.
fn has_empty_line(z: &DenseMatrix) -> bool {
    let n = z.nrows();
    let mut col_hit = vec![false; n];
    let mut row_hit = vec![false; n];
    for j in 0..n {
        for i in 0..n {
            if z[(i, j)] >= 0.0 {
                row_hit[i] = true;
                col_hit[j] = true;
            }
        }
    }
    !(row_hit.iter().all(|&b| b) && col_hit.iter().all(|&b| b))
}

/// Evaluates the trial point and returns `φ(y_trial) − φ(y)`.
///
/// With `X = (z)₊` and `X' = (z')₊` the difference equals
/// `α⟨∇φ, d⟩ + Σ_{X>0, z'≤0} X(−z') + ½‖X' − X‖²`, a sum of one signed and
/// two nonnegative terms that stays accurate when the decrease is tiny.
fn trial_decrease(
    g: &[f64],
    n: usize,
    z: &DenseMatrix,
    y_trial: &Vector,
    z_trial: &mut DenseMatrix,
    grad_trial: &mut Vector,
    alpha_gd: f64,
) -> f64 {
    shifted_into(g, y_trial.as_slice(), n, z_trial.as_mut_slice());
    let mut crossing = 0.0;
    let mut moved = 0.0;
    for (&zo, &zn) in z.iter().zip(z_trial.iter()) {
        let xo = zo.max(0.0);
        let xn = zn.max(0.0);
        if xo > 0.0 && zn <= 0.0 {
            crossing += xo * (-zn);
        }
        moved += (xn - xo) * (xn - xo);
    }
    row_col_sums(z_trial.as_slice(), n, |v| v.max(0.0), grad_trial.as_mut_slice());
    grad_trial.iter_mut().for_each(|s| *s -= 1.0);
    alpha_gd + crossing + 0.5 * moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::range_imbalance;
    use crate::projector::{dual_value_and_grad, kkt_residuals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        for n in [1, 3, 10] {
            let g = DenseMatrix::from_element(n, n, 1.0 / n as f64);
            let r = ssncg1_project(&g, &SsnSettings::with_tol(1e-15), None).unwrap();
            assert_eq!(r.iterations, 0);
            assert_eq!(r.eta, 0.0);
            assert_eq!(r.x, g);
            assert!(r.y.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_by_two_example() {
        // X = [[a, 1−a], [1−a, a]] minimizes (a−2)² + 2(1−a)² + a², so a = 1
        let g = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let r = ssncg1_project(&g, &SsnSettings::with_tol(1e-14), None).unwrap();
        assert!(r.converged);
        assert!((&r.x - DenseMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn one_by_one_is_trivial() {
        let r = ssncg1_project(
            &DenseMatrix::from_element(1, 1, -7.0),
            &SsnSettings::with_tol(1e-14),
            None,
        )
        .unwrap();
        assert!((r.x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_instances_converge_with_monotone_line_search() {
        let settings = SsnSettings::with_tol(1e-13);
        for (n, seed) in [(5, 1), (30, 2), (80, 3)] {
            let g = randn(n, seed);
            let r = ssncg1_project(&g, &settings, None).unwrap();
            assert!(r.converged, "n={n} eta={}", r.eta);
            assert!(r.x.iter().all(|&v| v >= 0.0));
            let k = kkt_residuals(&g, &r.x, &r.y).unwrap();
            assert!(k.eta <= 1e-13);
            assert!((k.eta - r.eta).abs() <= 1e-14);
            for rec in &r.trace {
                assert!(rec.phi_decrease <= settings.mu * rec.step * rec.directional);
            }
            assert!(range_imbalance(r.y.as_slice()).abs() <= 1e-9 * r.y.norm().max(1.0));
        }
    }

    #[test]
    fn badly_scaled_and_shifted_inputs_converge() {
        // large entries make η non-monotone far from the solution; a uniform
        // negative shift starts from X = 0
        for (scale, shift) in [(1e3, 0.0), (1e5, 0.0), (1.0, -100.0), (1e3, -1e5)] {
            let g = randn(60, 21).map(|v| v * scale + shift);
            let r = ssncg1_project(&g, &SsnSettings::with_tol(1e-9), None).unwrap();
            assert!(r.converged, "scale={scale} shift={shift} eta={}", r.eta);
            let k = kkt_residuals(&g, &r.x, &r.y).unwrap();
            assert!(k.eta <= 1e-9);
        }
    }

    #[test]
    fn shift_invariance_of_the_projection() {
        // Π(G + c eeᵀ) = Π(G): the shift lies in the range of B*
        let g = randn(15, 30);
        let s = SsnSettings::with_tol(1e-13);
        let a = ssncg1_project(&g, &s, None).unwrap();
        let b = ssncg1_project(&g.add_scalar(-250.0), &s, None).unwrap();
        assert!((&a.x - &b.x).norm() <= 1e-10);
    }

    #[test]
    fn poor_warm_start_is_replaced() {
        let g = randn(40, 31);
        let s = SsnSettings::with_tol(1e-12);
        let cold = ssncg1_project(&g, &s, None).unwrap();
        let bad = Vector::from_fn(80, |i, _| if i < 40 { -1e4 } else { -3e3 });
        let warm = ssncg1_project(&g, &s, Some(&bad)).unwrap();
        assert!(warm.converged);
        assert!((&warm.x - &cold.x).norm() <= 1e-9);
        assert!(warm.iterations <= cold.iterations + 10);
    }

    #[test]
    fn phi_decrease_matches_direct_evaluation() {
        let n = 12;
        let g = randn(n, 8);
        let r = ssncg1_project(
            &g,
            &SsnSettings {
                maxit: 2,
                ..SsnSettings::with_tol(0.0)
            },
            None,
        )
        .unwrap();
        let total: f64 = r.trace.iter().map(|t| t.phi_decrease).sum();
        let phi0 = dual_value_and_grad(&g, &Vector::zeros(2 * n)).unwrap().phi;
        let phi2 = dual_value_and_grad(&g, &r.y).unwrap().phi;
        assert!((phi2 - phi0 - total).abs() <= 1e-10 * (1.0 + phi0.abs()));
    }

    #[test]
    fn warm_start_from_solution_is_idempotent() {
        let g = randn(40, 4);
        let s = SsnSettings::with_tol(1e-12);
        let first = ssncg1_project(&g, &s, None).unwrap();
        let again = ssncg1_project(&g, &s, Some(&first.y)).unwrap();
        assert!(again.iterations <= 1);
        let reproj = ssncg1_project(&first.x, &s, None).unwrap();
        assert!((&reproj.x - &first.x).norm() <= 1e-10);
        // warm starts off the range are projected back
        let mut shifted = first.y.clone();
        shifted.rows_mut(0, 40).add_scalar_mut(3.0);
        shifted.rows_mut(40, 40).add_scalar_mut(-3.0);
        let r = ssncg1_project(&g, &s, Some(&shifted)).unwrap();
        assert!(r.iterations <= 1);
    }

    #[test]
    fn rejects_bad_input() {
        let s = SsnSettings::default();
        assert!(matches!(
            ssncg1_project(&DenseMatrix::from_element(2, 2, f64::INFINITY), &s, None),
            Err(Error::NonFinite(_))
        ));
        assert!(ssncg1_project(&DenseMatrix::zeros(2, 3), &s, None).is_err());
        assert!(ssncg1_project(&DenseMatrix::zeros(2, 2), &s, Some(&Vector::zeros(3))).is_err());
        let bad = SsnSettings {
            mu: 0.7,
            ..SsnSettings::default()
        };
        assert!(matches!(
            ssncg1_project(&DenseMatrix::zeros(2, 2), &bad, None),
            Err(Error::InvalidSettings(_))
        ));
    }

    #[test]
    fn settings_round_trip_through_json() {
        let s = SsnSettings {
            time_limit: Some(Duration::from_millis(1500)),
            ..SsnSettings::default()
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: SsnSettings = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let partial: SsnSettings = serde_json::from_str(r#"{"tol_eta": 1e-12}"#).unwrap();
        assert_eq!(partial.tol_eta, 1e-12);
        assert_eq!(partial.maxit, 1000);
    }
}
