use lmfmm::expansions::{
    estimate_order, l2t, phi_basis, phi_basis_parts, psi_basis_evanescent, s2l, s2m, ModifiedDistance, Point2,
};
use lmfmm::greens::{make_impedance_scattered, make_three_layer, ThreeLayerComponent, ThreeLayerParams};
use lmfmm::sommerfeld::{eval_kernel, EvalRequest};
use lmfmm::special_functions::bessel_j;
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn multipole_expansion_reproduces_the_kernel(
        px in -0.2f64..0.2, py in -0.2f64..0.2, tx in -2.0f64..2.0, ty in 1.2f64..2.0, alpha in 0.0f64..2.0,
    ) {
        let spec = make_impedance_scattered(1.0, alpha).unwrap();
        let c = [0.0, 0.5];
        let x0 = [px, 0.5 + py];
        let m = s2m(&[(x0, Complex64::new(1.0, 0.0))], c, 1.0, 24).unwrap();
        let v = m.evaluate(&spec, [tx, ty]).unwrap();
        let g = eval_kernel(&EvalRequest { spec, x: [tx, ty], x0, tol: 1e-12 }).unwrap();
        prop_assert!((v - g).norm() <= 1e-8 * g.norm(), "{} vs {}", v, g);
    }

    #[test]
    fn local_expansion_reproduces_the_kernel(
        sx in -2.0f64..2.0, sy in 0.2f64..1.5, tx in -0.2f64..0.2, ty in -0.2f64..0.2,
    ) {
        let p = ThreeLayerParams::new(1.5, 1.0, 2.0, 1.0).unwrap();
        let spec = make_three_layer(p, ThreeLayerComponent::S2t);
        let c = [0.0, -0.5];
        let l = s2l(&[([sx, sy], Complex64::new(1.0, 0.0))], &spec, c, 24).unwrap();
        let x = [tx, -0.5 + ty];
        let v = l2t(&l, x).unwrap();
        let g = eval_kernel(&EvalRequest { spec, x, x0: [sx, sy], tol: 1e-12 }).unwrap();
        prop_assert!((v - g).norm() <= 1e-8 * g.norm(), "{} vs {}", v, g);
    }

    #[test]
    fn order_grows_with_accuracy_and_ratio(q in 0.05f64..0.9, e in 2.0f64..12.0) {
        let d = ModifiedDistance { rho: 1.0 };
        let p = estimate_order(q, d, 10f64.powf(-e), 0.5).unwrap();
        prop_assert!(estimate_order(q, d, 10f64.powf(-e - 1.0), 0.5).unwrap() >= p);
        prop_assert!(estimate_order((q * 1.05).min(0.95), d, 10f64.powf(-e), 0.5).unwrap() >= p);
    }
}

#[test]
fn basis_of_order_zero_at_the_centre_is_the_kernel() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let c: Point2 = [0.3, 0.4];
    let x = [1.5, 0.9];
    let g = eval_kernel(&EvalRequest { spec, x, x0: c, tol: 1e-12 }).unwrap();
    assert!((phi_basis(0, x, &spec, c).unwrap() - g).norm() <= 1e-9 * g.norm());
}

#[test]
fn multipole_terms_decay_like_r_over_rho() {
    let spec = make_impedance_scattered(0.1, 1.0).unwrap();
    let term = |p: i64| {
        let b = phi_basis_parts(p, [2.0, 1.5], &spec, [0.0, 1.5]).unwrap();
        (bessel_j(p, 0.15).unwrap().abs() * b.total().norm(), b)
    };
    let limit = 1.5 / 13f64.sqrt();
    for p in [40i64, 45, -40, -45] {
        let (t0, b) = term(p);
        let (t1, _) = term(p + p.signum());
        assert!((t1 / t0 / limit - 1.0).abs() < 0.05, "p = {p}: {}", t1 / t0);
        assert!(b.propagating.norm() * 1e3 < b.evanescent.norm());
    }
}

#[test]
fn local_terms_decay_like_r_over_rho() {
    let p = ThreeLayerParams::new(1.0, 3.0, 1.0, 1.0).unwrap();
    let spec = make_three_layer(p, ThreeLayerComponent::S2t);
    let term = |p: i64| bessel_j(p, 4.5).unwrap().abs() * psi_basis_evanescent(p, [2.0, 2.5], &spec, [0.0, -0.5]).unwrap().norm();
    for p in [40i64, 50] {
        let r = term(p + 1) / term(p);
        assert!((r - 0.416).abs() < 0.01, "p = {p}: {r}");
    }
}
