use lmfmm::expansions::{s2m, Point2};
use lmfmm::fmm::{
    build_tree, convolve, convolve_with_stats, direct_sum, plan, relative_l2, upward_pass, ConvolveJob, Particle,
};
use lmfmm::greens::{
    make_dirichlet_scattered, make_free_space, make_impedance_scattered, make_three_layer, KernelSpec,
    ThreeLayerComponent, ThreeLayerParams,
};
use lmfmm::sommerfeld::{eval_kernel, EvalRequest};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_layer(c: ThreeLayerComponent) -> KernelSpec {
    make_three_layer(ThreeLayerParams::new(1.5, 1.0, 2.0, 1.0).unwrap(), c)
}

/// Every kernel with source and target strips of unit height.
fn kernels() -> Vec<(KernelSpec, (f64, f64))> {
    vec![
        (make_free_space(1.0), (0.0, 1.0)),
        (make_dirichlet_scattered(1.0), (0.01, 1.0)),
        (make_impedance_scattered(1.0, 1.0).unwrap(), (0.01, 1.0)),
        (three_layer(ThreeLayerComponent::S1), (0.01, 1.0)),
        (three_layer(ThreeLayerComponent::S2t), (-0.99, -0.01)),
        (three_layer(ThreeLayerComponent::S2b), (-0.99, -0.01)),
        (three_layer(ThreeLayerComponent::S3), (-2.0, -1.01)),
    ]
}

fn random_job(spec: KernelSpec, ty: (f64, f64), n: usize, m: usize, seed: u64) -> ConvolveJob {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sy = if spec.family == lmfmm::greens::Family::FreeSpace { (0.0, 1.0) } else { (0.01, 1.0) };
    let sources = (0..n)
        .map(|_| Particle {
            position: [rng.gen::<f64>(), rng.gen_range(sy.0..sy.1)],
            charge: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        })
        .collect();
    let targets = (0..m).map(|_| [rng.gen::<f64>(), rng.gen_range(ty.0..ty.1)]).collect();
    let mut job = ConvolveJob::new(spec, sources, targets, 1e-6);
    job.max_leaf = 10;
    job
}

#[test]
fn single_source_equals_kernel() {
    for (spec, ty) in kernels() {
        let job = random_job(spec, ty, 1, 1, 3);
        let v = convolve(&job).unwrap()[0];
        let g = eval_kernel(&EvalRequest { spec, x: job.targets[0], x0: job.sources[0].position, tol: 1e-12 }).unwrap();
        let q = job.sources[0].charge;
        assert!((v - q * g).norm() <= 1e-10 * (q * g).norm(), "{:?}", spec.family);
    }
}

#[test]
fn fmm_matches_direct_sum_for_every_kernel() {
    for (i, (spec, ty)) in kernels().into_iter().enumerate() {
        for n in [60, 250] {
            let job = random_job(spec, ty, n, n, 10 + i as u64);
            let (fast, stats) = convolve_with_stats(&job).unwrap();
            let slow = direct_sum(&job).unwrap();
            let e = relative_l2(&fast, &slow);
            assert!(e <= job.tol, "{:?} n = {n}: {e:e}", spec.family);
            if n == 250 {
                assert!(stats.m2l_translations > 0, "{:?}: no far field", spec.family);
            }
        }
    }
}

#[test]
fn far_field_only_uses_local_expansions() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let mut job = random_job(spec, (0.01, 0.2), 40, 40, 5);
    for p in &mut job.sources {
        p.position[0] += 6.0;
    }
    job.max_leaf = 4;
    let (fast, stats) = convolve_with_stats(&job).unwrap();
    assert_eq!(stats.direct_pairs, 0);
    assert!(relative_l2(&fast, &direct_sum(&job).unwrap()) <= job.tol);
}

#[test]
fn image_kernels_translate_near_wall_neighbours() {
    // Same points for free space and the Dirichlet half-space. Physical
    // neighbours are far apart once the source is reflected below y = 0.
    let mut dir = random_job(make_dirichlet_scattered(1.0), (0.2, 1.0), 300, 300, 8);
    for p in &mut dir.sources {
        p.position[1] = 0.2 + 0.8 * p.position[1];
    }
    let mut free = dir.clone();
    free.spec = make_free_space(1.0);
    let (_, sf) = convolve_with_stats(&free).unwrap();
    let (fast, sd) = convolve_with_stats(&dir).unwrap();
    assert!(sd.direct_pairs * 4 < sf.direct_pairs, "{} vs {}", sd.direct_pairs, sf.direct_pairs);
    assert!(relative_l2(&fast, &direct_sum(&dir).unwrap()) <= dir.tol);
}

#[test]
fn mirror_symmetric_configurations_give_mirrored_fields() {
    for (spec, ty) in kernels() {
        let mut job = random_job(spec, ty, 5, 5, 21);
        let mut mirrored = job.clone();
        for p in &mut mirrored.sources {
            p.position[0] = -p.position[0];
        }
        for x in &mut mirrored.targets {
            x[0] = -x[0];
        }
        job.tol = 1e-8;
        mirrored.tol = 1e-8;
        let a = direct_sum(&job).unwrap();
        let b = direct_sum(&mirrored).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u.norm() - v.norm()).abs() <= 1e-10 * u.norm(), "{:?}", spec.family);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = three_layer(ThreeLayerComponent::S1);
    let job = random_job(spec, (0.01, 1.0), 400, 400, 2);
    let run = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| convolve(&job).unwrap());
    let one = run(1);
    for n in [2, 5] {
        assert_eq!(one, run(n));
    }
}

#[test]
fn root_multipole_is_s2m_of_all_sources() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let mut job = random_job(spec, (0.01, 1.0), 80, 80, 4);
    job.order = Some(20);
    let p = plan(&job).unwrap();
    let charges: Vec<_> = job.sources.iter().map(|s| s.charge).collect();
    let pos: Vec<_> = job.sources.iter().map(|s| s.position).collect();
    let m = upward_pass(&p, &charges, &pos).unwrap();
    let root = &m[0];
    let all: Vec<(Point2, Complex64)> = job.sources.iter().map(|s| (s.position, s.charge)).collect();
    let direct = s2m(&all, root.center, spec.k_source, root.order).unwrap();
    let scale = direct.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for (a, b) in root.coeffs.iter().zip(&direct.coeffs) {
        assert!((a - b).norm() <= 1e-10 * scale);
    }
}

#[test]
fn inadmissible_jobs_are_rejected() {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let mut job = random_job(spec, (0.01, 1.0), 5, 5, 1);
    job.targets[2][1] = -0.5;
    assert!(matches!(convolve(&job), Err(lmfmm::Error::Geometry(_))));
    let mut job = random_job(spec, (0.01, 1.0), 5, 5, 1);
    job.sources.clear();
    assert!(convolve(&job).is_err());
    let big = random_job(spec, (0.01, 1.0), 4000, 3000, 1);
    assert!(matches!(direct_sum(&big), Err(lmfmm::Error::SizeGuard(_))));
}

fn points() -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0).prop_map(|(x, y)| [x, y * y]), 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_point_in_exactly_one_leaf(pts in points(), max_leaf in 1usize..20) {
        let t = build_tree(&pts, max_leaf).unwrap();
        let mut seen = vec![0usize; pts.len()];
        for b in t.leaves() {
            let idx = t.box_points(b);
            prop_assert!(idx.len() <= max_leaf);
            let n = &t.nodes[b];
            for &i in idx {
                seen[i] += 1;
                for d in 0..2 {
                    prop_assert!((pts[i][d] - n.center[d]).abs() <= n.half_width * (1.0 + 1e-12));
                }
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for n in &t.nodes {
            for &c in &n.children {
                let ch = &t.nodes[c];
                prop_assert_eq!(ch.half_width, 0.5 * n.half_width);
                prop_assert_eq!(ch.parent, Some(t.nodes.iter().position(|x| std::ptr::eq(x, n)).unwrap()));
                for d in 0..2 {
                    prop_assert!(((ch.center[d] - n.center[d]).abs() - ch.half_width).abs() <= 1e-12 * n.half_width);
                }
                prop_assert!(!ch.is_empty());
            }
        }
    }

    #[test]
    fn interactions_cover_every_pair_once(seed in 0u64..1000, n in 1usize..120, m in 1usize..120) {
        let spec = make_impedance_scattered(1.0, 1.0).unwrap();
        let mut job = random_job(spec, (0.01, 1.0), n, m, seed);
        job.max_leaf = 3;
        let p = plan(&job).unwrap();
        let mut count = vec![vec![0u8; n]; m];
        let mut add = |tb: usize, sb: usize| {
            for &i in p.targets.box_points(tb) {
                for &j in p.sources.box_points(sb) {
                    count[i][j] += 1;
                }
            }
        };
        for (tb, list) in p.interactions.far.iter().enumerate() {
            for &sb in list {
                add(tb, sb);
            }
        }
        for (tb, list) in p.interactions.near.iter().enumerate() {
            prop_assert!(list.is_empty() || p.targets.nodes[tb].is_leaf());
            for &sb in list {
                prop_assert!(p.sources.nodes[sb].is_leaf());
                prop_assert!(!p.interactions.far[tb].contains(&sb));
                add(tb, sb);
            }
        }
        prop_assert!(count.iter().flatten().all(|&c| c == 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn convolution_is_linear(seed in 0u64..1000, kernel in 0usize..7) {
        let (spec, ty) = kernels()[kernel];
        let a = random_job(spec, ty, 120, 60, seed);
        let mut b = a.clone();
        let mut sum = a.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for (pb, ps) in b.sources.iter_mut().zip(&mut sum.sources) {
            pb.charge = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            ps.charge += pb.charge;
        }
        let (fa, fb, fs) = (convolve(&a).unwrap(), convolve(&b).unwrap(), convolve(&sum).unwrap());
        let lin: Vec<_> = fa.iter().zip(&fb).map(|(x, y)| x + y).collect();
        prop_assert!(relative_l2(&lin, &fs) <= 1e-12);
    }
}
