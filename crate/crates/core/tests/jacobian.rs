use birkhoff::instances::random_gaussian;
use birkhoff::jacobian::dense::{dense_p0, PolyhedronDense};
use birkhoff::jacobian::{build_hs_jacobian, local_linearization_check, Linearization};
use birkhoff::linops::apply_b;
use birkhoff::projector::{ssncg1_project, SsnSettings};
use birkhoff::{DenseMatrix, Vector};

fn projected(g: &DenseMatrix) -> birkhoff::projector::ProjectionResult {
    ssncg1_project(g, &SsnSettings::with_tol(1e-15), None).unwrap()
}

#[test]
fn operator_matches_polyhedral_formula() {
    for seed in 0..12 {
        let n = 2 + (seed as usize % 4);
        let g = random_gaussian(n, 500 + seed).unwrap();
        let p = projected(&g);
        let op = build_hs_jacobian(&g, &p).unwrap();
        let poly = PolyhedronDense::birkhoff(n);
        let x = Vector::from_column_slice(g.as_slice());
        let px = Vector::from_column_slice(p.x.as_slice());
        let oracle = dense_p0(&poly, &x, &px).unwrap();
        let ours = op.to_dense().unwrap();
        let err = (ours - oracle).amax();
        assert!(err <= 1e-9, "seed {seed}: max entry difference {err:e}");
    }
}

#[test]
fn projector_properties_on_moderate_sizes() {
    for (k, n) in [7usize, 15, 30, 50].into_iter().enumerate() {
        let g = random_gaussian(n, 900 + k as u64).unwrap() * 0.3;
        let p = projected(&g);
        let op = build_hs_jacobian(&g, &p).unwrap();
        let h1 = random_gaussian(n, 1900 + k as u64).unwrap();
        let h2 = random_gaussian(n, 2900 + k as u64).unwrap();
        let p1 = op.apply(&h1).unwrap();
        let p2 = op.apply(&h2).unwrap();
        let scale = 1.0 + h1.norm() * h2.norm();
        assert!((p1.dot(&h2) - h1.dot(&p2)).abs() <= 1e-9 * scale, "symmetry n={n}");
        assert!(p1.dot(&h1) >= -1e-10 * (1.0 + h1.norm_squared()), "psd n={n}");
        assert!(
            (op.apply(&p1).unwrap() - &p1).norm() <= 1e-9 * (1.0 + h1.norm()),
            "idempotence n={n}"
        );
        assert!(
            apply_b(&p1).unwrap().norm() <= 1e-9 * (1.0 + h1.norm()),
            "constraints n={n}"
        );
        assert!(op.theta().hadamard(&p1).norm() == 0.0, "active entries n={n}");
    }
}

#[test]
fn first_order_model_is_exact_near_a_stable_pattern() {
    let mut checked = 0;
    for seed in 0..6 {
        let n = 6 + seed as usize;
        let g = random_gaussian(n, 70 + seed).unwrap();
        let h = random_gaussian(n, 170 + seed).unwrap();
        match local_linearization_check(&g, &h, 1e-6).unwrap() {
            Linearization::Residual(r) => {
                checked += 1;
                assert!(r <= 1e-9 * (1.0 + h.norm()), "seed {seed}: residual {r:e}");
            }
            Linearization::ActiveSetChanged => {}
        }
    }
    assert!(checked >= 3, "only {checked} instances kept their zero pattern");
}
