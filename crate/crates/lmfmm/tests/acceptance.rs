//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test --release --test acceptance`.

use std::time::{Duration, Instant};

use lmfmm::expansions::{phi_basis_parts, psi_basis_evanescent};
use lmfmm::fmm::{convolve, direct_sum, relative_l2, ConvolveJob, Particle};
use lmfmm::greens::{
    make_dirichlet_scattered, make_free_space, make_impedance_scattered, make_three_layer,
    sigma_three_layer_closed, sigma_three_layer_solve, ThreeLayerComponent, ThreeLayerParams,
};
use lmfmm::sommerfeld::{eval_kernel, plane_wave_hl, Direction, EvalRequest, QuadStudy};
use lmfmm::special_functions::{bessel_j, hankel1};
use lmfmm::validation::{reference_sum, sample_kernels, source_strip, target_strip, translation_chain};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const I4: Complex64 = Complex64::new(0.0, 0.25);

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, what: &str, detail: String, t: Duration) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {id}: {what} [{detail}; {:.2} s]", if pass { "PASS" } else { "FAIL" }, t.as_secs_f64());
    }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn req(spec: lmfmm::greens::KernelSpec, x: [f64; 2], x0: [f64; 2]) -> EvalRequest {
    EvalRequest { spec, x, x0, tol: 1e-12 }
}

fn free_space_identity(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..500 {
        let k = rng.gen_range(0.5..2.0);
        let kr = 10f64.powf(rng.gen_range(-2.0..20f64.log10()));
        let th = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let x0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let x = [x0[0] + kr / k * th.cos(), x0[1] + kr / k * th.sin()];
        match eval_kernel(&req(make_free_space(k), x, x0)) {
            Ok(v) => worst = worst.max(rel(v, I4 * hankel1(0, kr).unwrap())),
            Err(_) => errors += 1,
        }
    }
    let t = start.elapsed();
    r.line(
        "1",
        worst <= 1e-10 && errors == 0 && t.as_secs_f64() < 5.0,
        "free-space kernel equals (i/4)H0 on 500 pairs, k|x-x0| in [0.01, 20]",
        format!("max relative error {worst:.2e} (tol 1e-10), {errors} failures"),
        t,
    );
}

fn image_identities(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut wd, mut wi) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let k = rng.gen_range(0.5..2.0);
        let x: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(0.0..2.0)];
        let x0 = [rng.gen_range(-3.0..3.0), rng.gen_range(0.01..2.0)];
        let ri = (x[0] - x0[0]).hypot(x[1] + x0[1]);
        let h = I4 * hankel1(0, k * ri).unwrap();
        let d = eval_kernel(&req(make_dirichlet_scattered(k), x, x0)).unwrap();
        let n = eval_kernel(&req(make_impedance_scattered(k, 0.0).unwrap(), x, x0)).unwrap();
        wd = wd.max(rel(d, -h));
        wi = wi.max(rel(n, h));
    }
    r.line(
        "2",
        wd <= 1e-10 && wi <= 1e-10,
        "Dirichlet image -(i/4)H0 and impedance alpha=0 image +(i/4)H0",
        format!("max relative errors {wd:.2e} and {wi:.2e} (tol 1e-10)"),
        start.elapsed(),
    );
}

// 40-digit mpmath quadrature of the same integrals.
const EV: Complex64 = Complex64::new(-1.45890803227205968334, -0.49578730063699953505);
const IV1: Complex64 = Complex64::new(-1.234673751057581213478, -0.174721612631037564935);
const IV2: Complex64 = Complex64::new(-1.55391277058014777141, -0.50324920722105420928);

/// First `n` from which the error stays below `target` for four counts.
fn first_reaching<F: Fn(usize) -> f64>(err: F, target: f64, max: usize) -> Option<usize> {
    (1..=max).find(|&n| (n..n + 4).all(|m| err(m) <= target))
}

fn quadrature_study(r: &mut Report) {
    let start = Instant::now();
    let s = QuadStudy { x: 1.0, y: 0.1, k: 1.0, c: 2.0, alpha: 1.0 };
    let a = first_reaching(|n| (s.contour1_segment(n).unwrap() - IV1).norm(), 1e-14, 100);
    let b = first_reaching(|n| (s.contour2_segment(n).unwrap() - IV2).norm(), 1e-14, 400);
    let c = first_reaching(|n| (s.contour1_ray(n).unwrap() - (EV - IV1)).norm(), 1e-12, 200);
    let orig = (s.original(48).unwrap() - EV).norm();
    let t = start.elapsed();
    let within = |n: Option<usize>, expected: f64| n.is_some_and(|n| (n as f64 - expected).abs() <= 0.25 * expected);
    let ok_a = a.is_some_and(|n| n <= 20) && within(a, 17.0);
    let ok_b = b.is_some_and(|n| n >= 150) && within(b, 200.0);
    let ok_c = c.is_some_and(|n| n <= 48) && orig > 1e-3;
    let timed = t.as_secs_f64() < 10.0;
    r.line("3a", ok_a && timed, "contour-1 segment IV reaches 1e-14 with <= 20 nodes (expected ~17 +- 25%)", format!("n = {a:?}"), t);
    r.line("3b", ok_b && timed, "contour-2 segment IV needs >= 150 nodes (expected ~200 +- 25%)", format!("n = {b:?}"), t);
    r.line(
        "3c",
        ok_c && timed,
        "contour-1 Laguerre part reaches 1e-12 with <= 48 nodes, original stays above 1e-3",
        format!("n = {c:?}, original error at 48 nodes {orig:.2e}"),
        t,
    );
}

fn multipole_ratio(r: &mut Report) {
    let start = Instant::now();
    // Target and box centre at height 1.5 give y_t + y_c = 3 for the image.
    let spec = make_impedance_scattered(0.1, 1.0).unwrap();
    let limit = 1.5 / 13f64.sqrt();
    let mut worst_ratio = 0.0f64;
    let mut worst_split = f64::INFINITY;
    let term = |p: i64| {
        let b = phi_basis_parts(p, [2.0, 1.5], &spec, [0.0, 1.5]).unwrap();
        (bessel_j(p, 0.1 * 1.5).unwrap().abs() * b.total().norm(), b)
    };
    for m in 30..=60i64 {
        for p in [m, -m] {
            let (t0, b) = term(p);
            worst_split = worst_split.min(b.evanescent.norm() / b.propagating.norm());
            if m >= 40 {
                let (t1, _) = term(p + p.signum());
                worst_ratio = worst_ratio.max((t1 / t0 / limit - 1.0).abs());
            }
        }
    }
    let t = start.elapsed();
    r.line(
        "4",
        worst_ratio <= 0.05 && worst_split >= 1e3 && t.as_secs_f64() < 60.0,
        "impedance multipole ratio within 5% of r/sqrt(13) for 40 <= |p| <= 60, evanescent/propagating >= 1e3 for |p| >= 30",
        format!("max ratio deviation {:.2}%, min evanescent/propagating {worst_split:.2e}", 100.0 * worst_ratio),
        t,
    );
}

fn local_ratio(r: &mut Report) {
    let start = Instant::now();
    let p = ThreeLayerParams::new(1.0, 3.0, 1.0, 1.0).unwrap();
    let spec = make_three_layer(p, ThreeLayerComponent::S2t);
    // Box centre at y = -0.5 in the middle layer, source at y0 = 2.5: y0 - y_c = 3.
    let term = |p: i64| bessel_j(p, 3.0 * 1.5).unwrap().abs() * psi_basis_evanescent(p, [2.0, 2.5], &spec, [0.0, -0.5]).unwrap().norm();
    let mut worst = 0.0f64;
    let mut prev = term(40);
    for p in 40..=60 {
        let next = term(p + 1);
        worst = worst.max((next / prev - 0.416).abs());
        prev = next;
    }
    let t = start.elapsed();
    r.line(
        "5",
        worst <= 0.01 && t.as_secs_f64() < 60.0,
        "three-layer local ratio within 0.416 +- 0.01 for 40 <= p <= 60",
        format!("max deviation {worst:.4}"),
        t,
    );
}

fn sigma_cross_check(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut singular = 0;
    for _ in 0..20 {
        let p = ThreeLayerParams::new(rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.2..2.0))
            .unwrap();
        for _ in 0..1000 {
            let l: f64 = rng.gen_range(-20.0..20.0);
            match (sigma_three_layer_closed(l, &p), sigma_three_layer_solve(l, &p)) {
                (Ok(a), Ok(b)) => {
                    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                    worst = worst.max(diff / scale);
                }
                _ => singular += 1,
            }
        }
    }
    let t = start.elapsed();
    r.line(
        "6",
        worst <= 1e-12 && t.as_secs_f64() < 5.0,
        "three-layer closed-form sigma equals the 4x4 solve on 1000 lambda x 20 parameter sets",
        format!("max relative difference {worst:.2e} (tol 1e-12), {singular} points on a pole"),
        t,
    );
}

fn uniform_job(spec: lmfmm::greens::KernelSpec, n: usize, seed: u64, tol: f64) -> ConvolveJob {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (slo, shi) = source_strip(0.01, 0.99);
    let (tlo, thi) = target_strip(&spec, 0.01, 0.99);
    let sources = (0..n)
        .map(|_| Particle {
            position: [rng.gen(), rng.gen_range(slo..shi)],
            charge: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        })
        .collect();
    let targets = (0..n).map(|_| [rng.gen(), rng.gen_range(tlo..thi)]).collect();
    ConvolveJob::new(spec, sources, targets, tol)
}

fn fmm_correctness(r: &mut Report) {
    for (i, (name, spec)) in sample_kernels().into_iter().enumerate() {
        let job = uniform_job(spec, 2000, 70 + i as u64, 1e-6);
        let start = Instant::now();
        let fast = convolve(&job);
        let t = start.elapsed();
        let fast = match fast {
            Ok(v) => v,
            Err(e) => {
                r.line(&format!("7/{name}"), false, "FMM error vs exact sum <= 1e-6, N = 2000", format!("{e}"), t);
                continue;
            }
        };
        // Full reference by closed forms or the spectral sum; termwise
        // eval_kernel on a target subset as a second opinion.
        let exact = reference_sum(&spec, &job.sources, &job.targets, 1e-10).unwrap();
        let e_full = relative_l2(&fast, &exact);
        let pick: Vec<usize> = (0..20).map(|j| j * 100 + 7).collect();
        let sub = ConvolveJob { targets: pick.iter().map(|&j| job.targets[j]).collect(), ..job.clone() };
        let d = direct_sum(&sub).unwrap();
        let e_sub = relative_l2(&pick.iter().map(|&j| fast[j]).collect::<Vec<_>>(), &d);
        r.line(
            &format!("7/{name}"),
            e_full <= 1e-6 && e_sub <= 1e-6 && t.as_secs_f64() < 120.0,
            "FMM relative l2 error <= 1e-6, N = 2000 sources and targets, tol 1e-6",
            format!("error {e_full:.2e} vs full reference, {e_sub:.2e} vs direct_sum on 20 targets"),
            t,
        );
    }
}

fn fmm_scaling(r: &mut Report) {
    let spec = make_impedance_scattered(1.0, 1.0).unwrap();
    let start = Instant::now();
    let mut pts = Vec::new();
    for (i, n) in [1_000usize, 10_000, 100_000].into_iter().enumerate() {
        let job = uniform_job(spec, n, 80 + i as u64, 1e-6);
        let t = Instant::now();
        convolve(&job).unwrap();
        pts.push(((n as f64).ln(), t.elapsed().as_secs_f64()));
    }
    let m = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, t)| (a + x, b + t.ln()));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|&(x, t)| (x - mx) * (t.ln() - my)).sum();
    let den: f64 = pts.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    let gamma = num / den;
    let times: Vec<String> = pts.iter().map(|&(_, t)| format!("{t:.2}")).collect();
    r.line(
        "8",
        gamma <= 1.15,
        "impedance FMM wall time exponent <= 1.15 for N = 1e3, 1e4, 1e5, k * domain = 1",
        format!("gamma = {gamma:.3}, times {} s", times.join(" / ")),
        start.elapsed(),
    );
}

fn translation_chains(r: &mut Report) {
    let tol = 1e-6;
    for (name, spec) in sample_kernels() {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0.0f64;
        let mut failure = None;
        for _ in 0..100 {
            match translation_chain(&spec, tol, &mut rng) {
                Ok(c) => worst = worst.max(c.relative_error()),
                Err(e) => failure = Some(e.to_string()),
            }
        }
        r.line(
            &format!("9/{name}"),
            worst <= 10.0 * tol && failure.is_none(),
            "S2M-M2M-M2L-L2L-L2T chain within 10x budget (1e-6) on 100 geometries",
            format!("max relative error {worst:.2e}{}", failure.map(|f| format!(", error: {f}")).unwrap_or_default()),
            start.elapsed(),
        );
    }
}

fn plane_waves(r: &mut Report) {
    let start = Instant::now();
    let beta = 1.3;
    let mut worst = 0.0f64;
    let mut failures = 0;
    // Each quadrant lies in two of the half-planes; check both there.
    let quadrants = [
        (1.0, 1.0, [Direction::North, Direction::East]),
        (-1.0, 1.0, [Direction::North, Direction::West]),
        (-1.0, -1.0, [Direction::South, Direction::West]),
        (1.0, -1.0, [Direction::South, Direction::East]),
    ];
    for (sx, sy, dirs) in quadrants {
        for i in 0..5 {
            for j in 0..5 {
                let x = sx * (0.3 + 0.4 * i as f64);
                let y = sy * (0.3 + 0.4 * j as f64);
                let rr = x.hypot(y);
                for l in 0..=10i64 {
                    let e = hankel1(l, beta * rr).unwrap() * Complex64::from_polar(1.0, l as f64 * y.atan2(x));
                    for d in dirs {
                        match plane_wave_hl(l, d, x, y, beta) {
                            Ok(v) => worst = worst.max(rel(v, e)),
                            Err(_) => failures += 1,
                        }
                    }
                }
            }
        }
    }
    r.line(
        "10",
        worst <= 1e-9 && failures == 0,
        "plane-wave H_l e^{il theta} in all four directions, l <= 10, on quadrant grids",
        format!("max relative error {worst:.2e} (tol 1e-9), {failures} failures"),
        start.elapsed(),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    free_space_identity(&mut r);
    image_identities(&mut r);
    quadrature_study(&mut r);
    multipole_ratio(&mut r);
    local_ratio(&mut r);
    sigma_cross_check(&mut r);
    fmm_correctness(&mut r);
    fmm_scaling(&mut r);
    translation_chains(&mut r);
    plane_waves(&mut r);
    if r.failed > 0 {
        println!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}
