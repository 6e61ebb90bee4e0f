use lmfmm::expansions::{l2t, s2l, s2m, Point2};
use lmfmm::greens::{make_dirichlet_scattered, make_impedance_scattered};
use lmfmm::translations::{l2l, m2l_apply, m2l_matrix, m2m, M2LCache, M2LKey};
use lmfmm::validation::{sample_kernels, translation_chain};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn m2m_matches_direct_s2m(
        cx in -0.25f64..0.25, cy in -0.25f64..0.25,
        px in -0.1f64..0.1, py in -0.1f64..0.1,
        k in 0.2f64..3.0,
    ) {
        let child = [cx, cy];
        let src: Vec<(Point2, Complex64)> = vec![([cx + px, cy + py], Complex64::new(0.3, -1.1))];
        let order = 18;
        // The child carries enough terms that truncation does not show in the parent.
        let shifted = m2m(&s2m(&src, child, k, 40).unwrap(), [0.0, 0.0], order).unwrap();
        let direct = s2m(&src, [0.0, 0.0], k, order).unwrap();
        prop_assert!(max_diff(&shifted.coeffs, &direct.coeffs) <= 1e-12 * max_norm(&direct.coeffs).max(1.0));
    }

    #[test]
    fn l2l_preserves_the_field(
        sx in -3.0f64..3.0, cx in -0.2f64..0.2, cy in -0.2f64..0.2,
        tx in -0.08f64..0.08, ty in -0.08f64..0.08,
    ) {
        let spec = make_impedance_scattered(1.0, 0.7).unwrap();
        let src = vec![([sx, 3.0], Complex64::new(1.0, 0.0))];
        let parent = s2l(&src, &spec, [0.0, 1.0], 30).unwrap();
        let child = l2l(&parent, [cx, 1.0 + cy], 30).unwrap();
        let x = [cx + tx, 1.0 + cy + ty];
        let a = l2t(&parent, x).unwrap();
        let b = l2t(&child, x).unwrap();
        prop_assert!((a - b).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn matrices_depend_on_relative_geometry_only(shift in -5i32..5, k in 0.3f64..2.0) {
        let spec = make_dirichlet_scattered(k);
        let s = shift as f64 * 0.5;
        let a = m2l_matrix(&spec, [0.0, 0.375], [1.25, 0.625], 8, 8, 1e-12).unwrap();
        let b = m2l_matrix(&spec, [s, 0.375], [1.25 + s, 0.625], 8, 8, 1e-12).unwrap();
        prop_assert!(max_diff(&a.entries, &b.entries) <= 1e-12 * max_norm(&a.entries));
    }
}

#[test]
fn same_wavenumber_matrices_are_toeplitz_or_hankel() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let a = m2l_matrix(&spec, [0.0, 0.5], [1.5, 0.5], 6, 6, 1e-12).unwrap();
    let scale = max_norm(&a.entries);
    for p in -5i64..=5 {
        for q in -5i64..=5 {
            // Entries depend on p + q alone, with the (−1)^q sign.
            let sign = if q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let sign2 = if (q + 1).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let u = a.entry(p, q) * sign;
            let v = a.entry(p - 1, q + 1) * sign2;
            assert!((u - v).norm() <= 1e-12 * scale, "p = {p}, q = {q}");
        }
    }
}

#[test]
fn cache_reuses_and_respects_its_limit() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let make = || m2l_matrix(&spec, [0.0, 0.5], [1.5, 0.5], 6, 6, 1e-12);
    let key = M2LKey::new(&spec, [0, 0], [3, 1], 6, 6);
    let cache = M2LCache::new();
    let a = cache.get_or_try_insert(key, make).unwrap();
    let b = cache.get_or_try_insert(key, || panic!("rebuilt a cached matrix")).unwrap();
    assert!(std::sync::Arc::ptr_eq(&a, &b));
    assert_eq!(cache.len(), 1);
    assert_eq!(cache.bytes(), 13 * 13 * 16);
    let small = M2LCache::with_limit_bytes(100);
    let c = small.get_or_try_insert(key, make).unwrap();
    assert_eq!(c.entries, a.entries);
    assert!(small.is_empty());
}

#[test]
fn apply_rejects_order_mismatch() {
    let spec = make_dirichlet_scattered(1.0);
    let a = m2l_matrix(&spec, [0.0, 0.5], [1.5, 0.5], 4, 5, 1e-12).unwrap();
    let m = s2m(&[([0.0, 0.5], Complex64::new(1.0, 0.0))], [0.0, 0.5], spec.k_source, 4).unwrap();
    assert!(m2l_apply(&a, &m).is_err());
}

#[test]
fn chains_meet_their_budget_for_every_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, spec) in sample_kernels() {
        for tol in [1e-4, 1e-7, 1e-10] {
            for _ in 0..3 {
                let c = translation_chain(&spec, tol, &mut rng).unwrap();
                assert!(c.relative_error() <= 10.0 * tol, "{name}: {} error {:e}", c.description, c.relative_error());
            }
        }
    }
}
