use lmfmm::greens::{
    make_dirichlet_scattered, make_free_space, make_impedance_scattered, reference_value, KernelSpec,
};
use lmfmm::sommerfeld::{
    default_plan, eval_evanescent_contour1, eval_evanescent_contour2, eval_kernel, eval_split, eval_with_plan,
    plane_wave_h0, plane_wave_hl, Contour2Tail, ContourPlan, Direction, EvalRequest, Geometry, QuadStudy, Variant,
};
use lmfmm::special_functions::hankel1;
use num_complex::Complex64;
use proptest::prelude::*;

// mpmath, 40 digits.
const EV: Complex64 = Complex64::new(-1.45890803227205968334, -0.49578730063699953505);
const IV1: Complex64 = Complex64::new(-1.234673751057581213478, -0.174721612631037564935);
const IV2: Complex64 = Complex64::new(-1.55391277058014777141, -0.50324920722105420928);
const III2: Complex64 = Complex64::new(0.09500473830808809305, 0.00746190658405466665);

fn study() -> QuadStudy {
    QuadStudy { x: 1.0, y: 0.1, k: 1.0, c: 2.0, alpha: 1.0 }
}

fn first_n_reaching<F: Fn(usize) -> f64>(err: F, target: f64, max: usize) -> Option<usize> {
    (1..=max).find(|&n| (n..n + 4).all(|m| err(m) <= target))
}

fn req(spec: KernelSpec, x: [f64; 2], x0: [f64; 2]) -> EvalRequest {
    EvalRequest { spec, x, x0, tol: 1e-12 }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn study_references_are_consistent() {
    let s = study();
    assert!((s.contour1_segment(40).unwrap() - IV1).norm() < 1e-15);
    assert!((s.contour2_segment(400).unwrap() - IV2).norm() < 1e-14);
    assert!((s.contour2_ray(64).unwrap() - III2).norm() < 1e-14);
    assert!((IV2 + III2 - EV).norm() < 1e-15);
}

#[test]
fn contour1_segment_needs_about_17_nodes() {
    let s = study();
    let n = first_n_reaching(|n| (s.contour1_segment(n).unwrap() - IV1).norm(), 1e-14, 60).unwrap();
    assert!((13..=20).contains(&n), "n = {n}");
}

#[test]
fn contour2_segment_needs_many_nodes() {
    let s = study();
    let n = first_n_reaching(|n| (s.contour2_segment(n).unwrap() - IV2).norm(), 1e-14, 400).unwrap();
    assert!((150..=250).contains(&n), "n = {n}");
}

#[test]
fn contour1_laguerre_beats_original() {
    let s = study();
    let iii1 = EV - IV1;
    let n = first_n_reaching(|n| (s.contour1_ray(n).unwrap() - iii1).norm(), 1e-12, 100).unwrap();
    assert!(n <= 48, "n = {n}");
    assert!((s.original(48).unwrap() - EV).norm() > 1e-3);
}

#[test]
fn impedance_tail_independent_of_shift() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let r = req(spec, [1.0, 0.05], [0.0, 0.05]);
    let base = eval_evanescent_contour1(&r, 2.0).unwrap();
    for c in [0.5, 0.8, 1.0, 1.5, 2.5, 3.0, 4.0] {
        let v = eval_evanescent_contour1(&r, c).unwrap();
        assert!(rel(v, base) < 1e-10, "c = {c}: {v} vs {base}");
    }
}

#[test]
fn small_shift_recovers_real_tail() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let r = req(spec, [1.0, 0.4], [0.0, 0.4]);
    let g = Geometry::new(&spec, r.x, r.x0);
    let plan = ContourPlan { variant: Variant::Original, ..default_plan(&spec, &g).unwrap() };
    let full = eval_split(&r, &plan).unwrap();
    let loose = EvalRequest { tol: 1e-10, ..r };
    let small = eval_with_plan(&loose, &ContourPlan { variant: Variant::Contour1, shift_c: 2e-3, ..plan }).unwrap();
    assert!(rel(small, full) < 1e-10, "{small} vs {full}");
    assert!(matches!(eval_evanescent_contour1(&r, 1e-4), Err(lmfmm::Error::PoleNearPath { .. })));
}

#[test]
fn contour2_rejects_swept_pole() {
    let spec = make_impedance_scattered(1.0, 2.0).unwrap();
    let r = req(spec, [2.57, 0.01], [0.0, 0.01]);
    assert!(matches!(eval_evanescent_contour2(&r, 1.0), Err(lmfmm::Error::PoleNearPath { .. })));
    let a = eval_evanescent_contour1(&r, 2.5).unwrap();
    let b = eval_evanescent_contour2(&r, 2.5).unwrap();
    assert!(rel(b, a) < 1e-9);
}

#[test]
fn plane_wave_examples() {
    let h0 = |x: f64, y: f64| hankel1(0, x.hypot(y)).unwrap();
    assert!((plane_wave_h0(Direction::North, 0.1, 2.0, 1.0).unwrap() - h0(0.1, 2.0)).norm() < 1e-10);
    assert!((plane_wave_h0(Direction::West, -2.0, 0.3, 1.0).unwrap() - h0(-2.0, 0.3)).norm() < 1e-10);
    let e = plane_wave_h0(Direction::East, 1.0, 1.0, 1.0).unwrap();
    let n = plane_wave_h0(Direction::North, 1.0, 1.0, 1.0).unwrap();
    assert!((e - n).norm() < 1e-11);
    for l in 0..=10 {
        let s = plane_wave_hl(l, Direction::South, 0.3, -1.2, 2.0).unwrap();
        let th = (-1.2f64).atan2(0.3);
        let e = hankel1(l, 2.0 * 0.3f64.hypot(1.2)).unwrap() * Complex64::from_polar(1.0, l as f64 * th);
        assert!(rel(s, e) < 1e-9, "l = {l}");
    }
    assert!(plane_wave_hl(61, Direction::North, 0.0, 1.0, 1.0).is_err());
}

#[test]
fn guided_modes_reject_full_line() {
    use lmfmm::greens::{make_three_layer, ThreeLayerComponent, ThreeLayerParams};
    let p = ThreeLayerParams::new(1.0, 3.0, 1.0, 1.0).unwrap();
    let spec = make_three_layer(p, ThreeLayerComponent::S1);
    assert!(eval_kernel(&req(spec, [1.0, 0.5], [0.0, 0.2])).is_err());
}

#[test]
fn three_layer_contour_consistency() {
    use lmfmm::greens::{make_three_layer, ThreeLayerComponent, ThreeLayerParams};
    let p = ThreeLayerParams::new(1.5, 1.0, 2.0, 1.0).unwrap();
    for comp in [ThreeLayerComponent::S1, ThreeLayerComponent::S2t, ThreeLayerComponent::S2b, ThreeLayerComponent::S3] {
        let spec = make_three_layer(p, comp);
        let (y, y0) = match comp {
            ThreeLayerComponent::S1 => (0.3, 0.2),
            ThreeLayerComponent::S2t | ThreeLayerComponent::S2b => (-0.4, 0.2),
            ThreeLayerComponent::S3 => (-1.3, 0.2),
        };
        let r = req(spec, [1.5, y], [0.0, y0]);
        let g = Geometry::new(&spec, r.x, r.x0);
        let plan = default_plan(&spec, &g).unwrap();
        let a = eval_with_plan(&r, &ContourPlan { variant: Variant::Contour1, ..plan }).unwrap();
        let b = eval_with_plan(&r, &ContourPlan { variant: Variant::Original, ..plan }).unwrap();
        assert!(rel(a, b) < 1e-10, "{comp:?}: {a} vs {b}");
    }
}

#[test]
fn panel_edge_next_to_ray_start_is_kept() {
    use lmfmm::greens::{make_three_layer, ThreeLayerComponent, ThreeLayerParams};
    // Here √3 + c falls within 1e-3 c of the start of the vertical Laguerre ray.
    let spec = make_three_layer(ThreeLayerParams::new(1.5, 1.0, 2.0, 1.0).unwrap(), ThreeLayerComponent::S1);
    let r = req(spec, [0.9312816067810783, 0.18812731551761047], [0.049201019654119604, 0.4304836583898293]);
    let g = Geometry::new(&spec, r.x, r.x0);
    let plan = default_plan(&spec, &g).unwrap();
    let a = eval_with_plan(&r, &ContourPlan { variant: Variant::Contour1, ..plan }).unwrap();
    let b = eval_with_plan(&r, &ContourPlan { variant: Variant::Original, ..plan }).unwrap();
    assert!(rel(a, b) < 1e-11, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn contour_equivalence(x in -3.0f64..3.0, y in 0.01f64..1.5, y0 in 0.01f64..1.5, alpha in prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, -2.0])) {
        prop_assume!(x.abs() > 0.05);
        let spec = make_impedance_scattered(1.0, alpha).unwrap();
        let r = req(spec, [x, y], [0.0, y0]);
        let g = Geometry::new(&spec, r.x, r.x0);
        let need = Contour2Tail::min_shift(&spec, g.x, g.y()).max(Contour2Tail::min_shift(&spec, -g.x, g.y()));
        prop_assume!(need <= 4.0);
        let c = lmfmm::sommerfeld::default_shift(&spec, x).max(1.05 * need);
        let a = eval_evanescent_contour1(&r, c).unwrap();
        let b = eval_evanescent_contour2(&r, c).unwrap();
        prop_assert!((a - b).norm() <= 1e-9 * a.norm().max(1e-300), "{} vs {}", a, b);
    }

    #[test]
    fn direction_equivalence(x in 0.3f64..2.0, u in 1.0f64..2.0, k in 0.2f64..3.0) {
        // Overlap region |X| ≤ Y ≤ 2|X|, where the real tail also converges.
        let spec = make_dirichlet_scattered(k);
        let y = x * u;
        let r = req(spec, [x, y * 0.5], [0.0, y * 0.5]);
        let g = Geometry::new(&spec, r.x, r.x0);
        let plan = default_plan(&spec, &g).unwrap();
        let shift = lmfmm::sommerfeld::default_shift(&spec, x);
        let a = eval_with_plan(&r, &ContourPlan { variant: Variant::Contour1, shift_c: shift, ..plan }).unwrap();
        let b = eval_with_plan(&r, &ContourPlan { variant: Variant::Original, ..plan }).unwrap();
        prop_assert!(rel(a, b) < 1e-9);
    }

    #[test]
    fn free_space_matches_hankel(x in -10.0f64..10.0, y in -10.0f64..10.0, k in 0.1f64..2.0) {
        let spec = make_free_space(k);
        prop_assume!(k * x.hypot(y) > 0.01);
        let r = req(spec, [x, y], [0.0, 0.0]);
        let v = eval_kernel(&r).unwrap();
        let e = reference_value(&spec, r.x, r.x0).unwrap();
        prop_assert!(rel(v, e) < 1e-10, "{} vs {}", v, e);
    }
}

#[test]
fn small_impedance_matches_oracle() {
    for alpha in [1e-4, 2.4e-3, 1e-2] {
        let spec = make_impedance_scattered(1.0, alpha).unwrap();
        for (x, x0) in [([1.09, 1.14], [-0.05, 0.62]), ([2.0, 0.1], [0.0, 0.2]), ([0.1, 0.5], [0.0, 0.3])] {
            let v = eval_kernel(&req(spec, x, x0)).unwrap();
            let e = lmfmm::validation::sommerfeld_reference(&spec, x, x0, 1e-13).unwrap().value;
            assert!(rel(v, e) < 1e-10, "alpha = {alpha}, {x:?}: {v} vs {e}");
        }
    }
}
