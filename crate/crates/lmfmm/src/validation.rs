//! Independent oracles and the seeded property suite.
//!
//! [`adaptive_reference`] is a globally adaptive 15-point Gauss-Kronrod rule.
//! [`sommerfeld_reference`] uses it on its own parametrisation of the
//! canonical integral (`λ = m − h cos θ` between branch points and
//! `λ = ±K cosh u` on the tails), so it shares no contour or node choice with
//! [`crate::sommerfeld`]. [`spectral_sum`] evaluates a whole N-body sum on one
//! real-axis rule by exchanging sum and integral, which makes exact reference
//! sums for a few thousand particles affordable.

use crate::error::{Error, Result};
use crate::expansions::{l2t, s2m, ModifiedDistance, Point2};
use crate::fmm::{convolve, direct_sum, relative_l2, ConvolveJob, Particle};
use crate::greens::{
    make_dirichlet_scattered, make_free_space, make_impedance_scattered, reference_value, sigma_three_layer_closed,
    sigma_three_layer_solve, Family, KernelSpec, SpectralPoint, ThreeLayerParams,
};
use crate::quadrature::{cached, gauss_laguerre, gauss_legendre, RuleKind};
use crate::sommerfeld::{default_plan, eval_kernel, eval_with_plan, ContourPlan, EvalRequest, Geometry, Variant};
use crate::special_functions::{bessel_j_seq, bessel_y_seq, w_sqrt};
use crate::translations::{l2l, m2l_apply, m2l_matrix, m2m};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BinaryHeap;
use std::fmt;

// Kronrod nodes (descending, last is 0) and weights; Gauss weights for the
// odd-indexed Kronrod nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Interval limit of the adaptive oracle.
pub const MAX_INTERVALS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub value: Complex64,
    /// Absolute error estimate, `Σ |K15 − G7|` over the final intervals.
    pub estimated_error: f64,
    pub evaluations: usize,
}

/// Path of integration in the complex `λ` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contour {
    Segment { from: Complex64, to: Complex64 },
    /// `λ = from + direction·s`, `s ≥ 0`, mapped to `u ∈ [0, 1)` by `s = u/(1−u)`.
    Ray { from: Complex64, direction: Complex64 },
}

struct Piece<'a> {
    f: Box<dyn Fn(f64) -> Complex64 + Sync + 'a>,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    piece: usize,
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Interval {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn kronrod(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> Result<(Complex64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = Complex64::new(0.0, 0.0);
    let mut g = Complex64::new(0.0, 0.0);
    for (i, (&x, &w)) in XGK.iter().zip(&WGK).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &s in pts {
            let v = f(c + h * s);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Domain(format!("integrand not finite at parameter {}", c + h * s)));
            }
            k += w * v;
            if i % 2 == 1 {
                g += WG[i / 2] * v;
            }
        }
    }
    Ok((k * h, ((k - g) * h).norm()))
}

/// Global adaptive bisection over several pieces until the summed error
/// estimate is at most `target · |Σ|`.
fn adaptive_pieces(pieces: &[Piece], ranges: &[(f64, f64)], target: f64) -> Result<OracleResult> {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for (i, &(a, b)) in ranges.iter().enumerate() {
        let (value, error) = kronrod(&*pieces[i].f, a, b)?;
        evaluations += 15;
        heap.push(Interval { piece: i, a, b, value, error });
    }
    loop {
        let value: Complex64 = heap.iter().map(|iv| iv.value).sum();
        let error: f64 = heap.iter().map(|iv| iv.error).sum();
        if error <= target * value.norm() || error == 0.0 {
            return Ok(OracleResult { value, estimated_error: error, evaluations });
        }
        let worst = heap.pop().unwrap();
        let m = 0.5 * (worst.a + worst.b);
        if heap.len() >= MAX_INTERVALS || !(m > worst.a && m < worst.b) {
            return Err(Error::NoConvergence { estimate: value, error });
        }
        for (a, b) in [(worst.a, m), (m, worst.b)] {
            let (value, error) = kronrod(&*pieces[worst.piece].f, a, b)?;
            evaluations += 15;
            heap.push(Interval { piece: worst.piece, a, b, value, error });
        }
    }
}

/// `∫ f(λ) dλ` along `contour` to relative accuracy `target_error`.
pub fn adaptive_reference<F>(f: F, contour: Contour, target_error: f64) -> Result<OracleResult>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    if !(target_error > 0.0) {
        return Err(Error::Domain(format!("target error must be positive, got {target_error}")));
    }
    let piece: Piece = match contour {
        Contour::Segment { from, to } => Piece { f: Box::new(move |u| f(from + (to - from) * u) * (to - from)) },
        Contour::Ray { from, direction } => Piece {
            f: Box::new(move |u| {
                let s = u / (1.0 - u);
                f(from + direction * s) * direction / ((1.0 - u) * (1.0 - u))
            }),
        },
    };
    adaptive_pieces(&[piece], &[(0.0, 1.0)], target_error)
}

fn canonical_heights(spec: &KernelSpec, x: Point2, x0: Point2) -> Result<(f64, f64)> {
    let a = spec.target_height(x[1]);
    let b = spec.source_height(x0[1]);
    if spec.family == Family::FreeSpace {
        // Symmetric in y − y0.
        let y = (x[1] - x0[1]).abs();
        return Ok((y, 0.0));
    }
    if !(a - b > 0.0) {
        return Err(Error::Geometry(format!("reference needs Y > 0, got {}", a - b)));
    }
    Ok((a, b))
}

/// Interior breakpoints `±κ` of the propagating interval, ascending.
fn breakpoints(spec: &KernelSpec) -> Vec<f64> {
    let ks = spec.wavenumbers();
    let mut v: Vec<f64> = ks.iter().map(|k| -k).chain(ks.iter().copied()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn piece_point(lo: f64, hi: f64, theta: f64) -> (SpectralPoint, f64) {
    let m = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let (s, c) = theta.sin_cos();
    let half = 0.5 * theta;
    let p = SpectralPoint::Piece {
        lambda: m - h * c,
        lo,
        hi,
        d_lo: 2.0 * h * half.sin().powi(2),
        d_hi: 2.0 * h * half.cos().powi(2),
    };
    (p, h * s)
}

/// Integrand times `dλ` at one spectral point.
fn canonical_term(spec: &KernelSpec, p: &SpectralPoint, dl: f64, x: f64, a: f64, b: f64) -> Complex64 {
    let l = p.lambda();
    let wt = p.w(spec.k_target);
    let ws = p.w(spec.k_source);
    let sigma = match spec.sigma.eval(p) {
        Ok(s) => s,
        Err(_) => return Complex64::new(f64::NAN, 0.0),
    };
    let e = (Complex64::i() * l * x - wt * a + ws * b).exp();
    e * sigma / (4.0 * std::f64::consts::PI * wt) * dl
}

/// The canonical integral at one target/source pair by adaptive quadrature.
pub fn sommerfeld_reference(spec: &KernelSpec, x: Point2, x0: Point2, target_error: f64) -> Result<OracleResult> {
    if spec.sigma.has_real_axis_poles() {
        return Err(Error::Unsupported("reference needs a σ without real-axis poles".into()));
    }
    let (a, b) = canonical_heights(spec, x, x0)?;
    let xx = x[0] - x0[0];
    let bp = breakpoints(spec);
    let kk = *bp.last().unwrap();
    let mut pieces: Vec<Piece> = Vec::new();
    let mut ranges = Vec::new();
    for w in bp.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let s = *spec;
        pieces.push(Piece {
            f: Box::new(move |th| {
                let (p, dl) = piece_point(lo, hi, th);
                canonical_term(&s, &p, dl, xx, a, b)
            }),
        });
        ranges.push((0.0, std::f64::consts::PI));
    }
    // Tails λ = ±K cosh u up to where e^{−K cosh(u) Y} is negligible.
    let y = a - b;
    let umax = (60.0 / (kk * y)).max(1.0).acosh().max(1.0);
    for negative in [false, true] {
        let s = *spec;
        pieces.push(Piece {
            f: Box::new(move |u| {
                let t = kk * u.sinh();
                let p = SpectralPoint::Tail { t: Complex64::new(t, 0.0), kref: kk, negative };
                canonical_term(&s, &p, t, xx, a, b)
            }),
        });
        ranges.push((0.0, umax));
    }
    adaptive_pieces(&pieces, &ranges, target_error)
}

/// Potentials `Σ_j q_j G(x_i, x_j)` on one shared real-axis rule.
///
/// Needs `min a − max b > 0` over all targets and sources. Rules are refined
/// until two successive potential vectors agree to `tol` in relative ℓ₂.
pub fn spectral_sum(spec: &KernelSpec, sources: &[Particle], targets: &[Point2], tol: f64) -> Result<Vec<Complex64>> {
    if spec.family == Family::FreeSpace {
        return Err(Error::Unsupported("spectral sum needs separated canonical heights".into()));
    }
    if spec.sigma.has_real_axis_poles() {
        return Err(Error::Unsupported("spectral sum needs a σ without real-axis poles".into()));
    }
    if sources.is_empty() || targets.is_empty() {
        return Err(Error::Domain("empty source or target set".into()));
    }
    let amin = targets.iter().map(|x| spec.target_height(x[1])).fold(f64::INFINITY, f64::min);
    let bmax = sources.iter().map(|p| spec.source_height(p.position[1])).fold(f64::NEG_INFINITY, f64::max);
    let ymin = amin - bmax;
    if !(ymin > 0.0) {
        return Err(Error::Geometry(format!("spectral sum needs min a − max b > 0, got {ymin}")));
    }
    let xs = targets.iter().map(|x| x[0]).chain(sources.iter().map(|p| p.position[0]));
    let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let span = (xhi - xlo).max(1e-3);
    let tmax = 40.0 / ymin;
    let mut panel = 4.0f64.min(4.0 / span);
    let mut nprop = 32;
    let mut prev: Option<Vec<Complex64>> = None;
    for _ in 0..6 {
        let cur = spectral_pass(spec, sources, targets, amin, bmax, nprop, panel, tmax)?;
        if let Some(p) = prev {
            if relative_l2(&p, &cur) <= tol {
                return Ok(cur);
            }
        }
        prev = Some(cur);
        panel /= 2.0;
        nprop *= 2;
    }
    let p = prev.unwrap();
    Err(Error::NoConvergence { estimate: p[0], error: f64::NAN })
}

struct SpectralNode {
    /// Tail variable, 0 on the propagating pieces.
    t: f64,
    lambda: f64,
    wt: Complex64,
    ws: Complex64,
    weight: Complex64,
}

// Pairs with t·Y beyond this contribute below e^{−40} and are skipped.
const DECAY_CUT: f64 = 40.0;

#[allow(clippy::too_many_arguments)]
fn spectral_pass(
    spec: &KernelSpec,
    sources: &[Particle],
    targets: &[Point2],
    amin: f64,
    bmax: f64,
    nprop: usize,
    panel: f64,
    tmax: f64,
) -> Result<Vec<Complex64>> {
    // Integrand factor shared by all pairs: σ/(4π w_t) e^{−w_t a_min + w_s b_max} dλ.
    let node = |t: f64, p: &SpectralPoint, dl: f64| -> Result<SpectralNode> {
        let wt = p.w(spec.k_target);
        let ws = p.w(spec.k_source);
        let sigma = spec.sigma.eval(p)?;
        let weight = sigma / (4.0 * std::f64::consts::PI * wt) * (-wt * amin + ws * bmax).exp() * dl;
        Ok(SpectralNode { t, lambda: p.lambda().re, wt, ws, weight })
    };
    let mut nodes: Vec<SpectralNode> = Vec::new();
    let bp = breakpoints(spec);
    let kk = *bp.last().unwrap();
    let gl = cached(RuleKind::Legendre, nprop)?;
    for w in bp.windows(2) {
        for (&u, &gw) in gl.nodes.iter().zip(&gl.weights) {
            let th = std::f64::consts::FRAC_PI_2 * (u + 1.0);
            let (p, dl) = piece_point(w[0], w[1], th);
            nodes.push(node(0.0, &p, dl * gw * std::f64::consts::FRAC_PI_2)?);
        }
    }
    let g16 = cached(RuleKind::Legendre, 16)?;
    let npanels = (tmax / panel).ceil() as usize;
    for i in 0..npanels {
        let (t0, t1) = (i as f64 * panel, (i + 1) as f64 * panel);
        for (&u, &gw) in g16.nodes.iter().zip(&g16.weights) {
            let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * u;
            let dl = t / (t * t + kk * kk).sqrt() * 0.5 * (t1 - t0) * gw;
            for negative in [false, true] {
                let p = SpectralPoint::Tail { t: Complex64::new(t, 0.0), kref: kk, negative };
                nodes.push(node(t, &p, dl)?);
            }
        }
    }
    nodes.sort_by(|a, b| a.t.total_cmp(&b.t));
    // Every pair decays at least like e^{−t(a − b)}. Sources in order of
    // increasing a_min − b_j, so each node sums a prefix.
    let mut order: Vec<(f64, usize)> =
        sources.iter().enumerate().map(|(j, p)| (amin - spec.source_height(p.position[1]), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let weighted: Vec<Complex64> = nodes
        .par_iter()
        .map(|n| {
            let count = order.partition_point(|&(depth, _)| n.t * depth <= DECAY_CUT);
            let s: Complex64 = order[..count]
                .iter()
                .map(|&(_, j)| {
                    let p = &sources[j];
                    let b = spec.source_height(p.position[1]) - bmax;
                    p.charge * (Complex64::new(0.0, -n.lambda * p.position[0]) + n.ws * b).exp()
                })
                .sum();
            n.weight * s
        })
        .collect();
    Ok(targets
        .par_iter()
        .map(|x| {
            let a = spec.target_height(x[1]) - amin;
            let depth = spec.target_height(x[1]) - bmax;
            let count = nodes.partition_point(|n| n.t * depth <= DECAY_CUT);
            nodes[..count]
                .iter()
                .zip(&weighted)
                .map(|(n, w)| w * (Complex64::new(0.0, n.lambda * x[0]) - n.wt * a).exp())
                .sum()
        })
        .collect())
}

/// Best available reference sum: closed forms where the method of images
/// gives them, the spectral sum otherwise.
pub fn reference_sum(spec: &KernelSpec, sources: &[Particle], targets: &[Point2], tol: f64) -> Result<Vec<Complex64>> {
    if reference_value(spec, [0.0, 1.0], [0.5, 1.0]).is_some() {
        return targets
            .par_iter()
            .map(|&x| {
                let mut phi = Complex64::new(0.0, 0.0);
                for p in sources {
                    let g = reference_value(spec, x, p.position)
                        .ok_or_else(|| Error::Geometry(format!("no closed form at {x:?}, {:?}", p.position)))?;
                    phi += p.charge * g;
                }
                Ok(phi)
            })
            .collect();
    }
    spectral_sum(spec, sources, targets, tol)
}

/// Outcome of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub counterexample: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub seed: u64,
    pub outcomes: Vec<PropertyOutcome>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyOutcome> {
        self.outcomes.iter().filter(|o| !o.passed())
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "property suite, seed {}", self.seed)?;
        for o in &self.outcomes {
            match &o.counterexample {
                None => writeln!(f, "PASS {} ({} cases)", o.name, o.cases)?,
                Some(c) => writeln!(f, "FAIL {}: {}", o.name, c)?,
            }
        }
        Ok(())
    }
}

/// Branch rule under test.
pub type BranchRule = fn(Complex64, f64) -> Complex64;

/// Runs every property with the library's branch rule.
pub fn run_property_suite(seed: u64) -> PropertyReport {
    run_property_suite_with(seed, w_sqrt)
}

type Check = fn(&mut ChaCha8Rng, BranchRule) -> (usize, Option<String>);

/// Runs every property with `branch` standing in for `w_sqrt` in the
/// branch-rule property.
pub fn run_property_suite_with(seed: u64, branch: BranchRule) -> PropertyReport {
    let checks: Vec<(&'static str, Check)> = vec![
        ("w_sqrt branch rule", check_branch),
        ("Bessel Wronskian", check_wronskian),
        ("Gauss-Legendre exactness", check_legendre),
        ("Gauss-Laguerre moments", check_laguerre),
        ("free-space kernel vs Hankel", check_free_space),
        ("image identities", check_images),
        ("three-layer closed form vs solve", check_three_layer),
        ("impedance sigma tends to 1", check_sigma_limit),
        ("contour-1 vs original", check_contours),
        ("adaptive oracle vs eval_kernel", check_oracle),
        ("oracle self-consistency", check_oracle_self),
        ("M2M vs direct S2M", check_m2m),
        ("translation chain vs eval_kernel", check_chain),
        ("M2L reuse", check_m2l_reuse),
        ("FMM vs direct sum", check_fmm),
    ];
    let outcomes = checks
        .par_iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
            let (cases, counterexample) = check(&mut rng, branch);
            PropertyOutcome { name, cases, counterexample }
        })
        .collect();
    PropertyReport { seed, outcomes }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn check_branch(rng: &mut ChaCha8Rng, branch: BranchRule) -> (usize, Option<String>) {
    let n = 200;
    for _ in 0..n {
        let l: f64 = rng.gen_range(-5.0..5.0);
        let k: f64 = rng.gen_range(0.1..3.0);
        let w = branch(Complex64::new(l, 0.0), k);
        let sq = (w * w - (l * l - k * k)).norm() <= 1e-12 * (l * l + k * k);
        let side = if l.abs() >= k { w.im == 0.0 && w.re >= 0.0 } else { w.re == 0.0 && w.im < 0.0 };
        if !(sq && side) {
            return (n, Some(format!("lambda = {l}, k = {k}: w = {w}")));
        }
    }
    (n, None)
}

fn check_wronskian(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 50;
    for _ in 0..n {
        let z: f64 = rng.gen_range(0.1..50.0);
        let m = rng.gen_range(0..30usize);
        let (j, y) = match (bessel_j_seq(m + 1, z), bessel_y_seq(m + 1, z)) {
            (Ok(j), Ok(y)) => (j, y),
            _ => return (n, Some(format!("evaluation failed at z = {z}, n = {m}"))),
        };
        let wr = j[m + 1] * y[m] - j[m] * y[m + 1];
        let e = 2.0 / (std::f64::consts::PI * z);
        if (wr - e).abs() > 1e-10 * e {
            return (n, Some(format!("z = {z}, n = {m}: {wr} vs {e}")));
        }
    }
    (n, None)
}

fn check_legendre(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 20;
    for _ in 0..n {
        let nodes = rng.gen_range(2..64usize);
        let m = rng.gen_range(0..nodes);
        let rule = gauss_legendre(nodes).unwrap();
        let v = rule.integrate(|x| x.powi(2 * m as i32));
        let e = 2.0 / (2 * m + 1) as f64;
        if (v - e).abs() > 1e-13 {
            return (n, Some(format!("n = {nodes}, x^{}: {v} vs {e}", 2 * m)));
        }
    }
    (n, None)
}

fn check_laguerre(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 10;
    for _ in 0..n {
        let nodes = rng.gen_range(2..128usize);
        let rule = gauss_laguerre(nodes).unwrap();
        let s0 = rule.integrate(|_| 1.0);
        let s1 = rule.integrate(|x| x);
        if (s0 - 1.0).abs() > 1e-12 || (s1 - 1.0).abs() > 1e-11 {
            return (n, Some(format!("n = {nodes}: Σw = {s0}, Σwx = {s1}")));
        }
    }
    (n, None)
}

fn req(spec: KernelSpec, x: Point2, x0: Point2) -> EvalRequest {
    EvalRequest { spec, x, x0, tol: 1e-12 }
}

fn check_free_space(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 20;
    for _ in 0..n {
        let k: f64 = rng.gen_range(0.2..2.0);
        let x: Point2 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        if k * x[0].hypot(x[1]) < 0.01 {
            continue;
        }
        let spec = make_free_space(k);
        let e = reference_value(&spec, x, [0.0, 0.0]).unwrap();
        match eval_kernel(&req(spec, x, [0.0, 0.0])) {
            Ok(v) if rel(v, e) < 1e-10 => {}
            other => return (n, Some(format!("k = {k}, x = {x:?}: {other:?} vs {e}"))),
        }
    }
    (n, None)
}

fn check_images(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 20;
    for i in 0..n {
        let k: f64 = rng.gen_range(0.2..2.0);
        let spec = if i % 2 == 0 { make_dirichlet_scattered(k) } else { make_impedance_scattered(k, 0.0).unwrap() };
        let x = [rng.gen_range(-3.0..3.0), rng.gen_range(0.0..2.0)];
        let x0 = [0.0, rng.gen_range(0.01..2.0)];
        let e = reference_value(&spec, x, x0).unwrap();
        match eval_kernel(&req(spec, x, x0)) {
            Ok(v) if rel(v, e) < 1e-10 => {}
            other => return (n, Some(format!("{:?} k = {k}, x = {x:?}, x0 = {x0:?}: {other:?} vs {e}", spec.family))),
        }
    }
    (n, None)
}

fn random_params(rng: &mut ChaCha8Rng) -> ThreeLayerParams {
    ThreeLayerParams::new(rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.2..2.0))
        .unwrap()
}

fn check_three_layer(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 100;
    for _ in 0..n {
        let p = random_params(rng);
        let l: f64 = rng.gen_range(-20.0..20.0);
        let (a, b) = match (sigma_three_layer_closed(l, &p), sigma_three_layer_solve(l, &p)) {
            (Ok(a), Ok(b)) => (a, b),
            // Exactly on a guided-mode pole.
            _ => continue,
        };
        let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        if diff > 1e-12 * scale {
            return (n, Some(format!("{p:?}, lambda = {l}: {a:?} vs {b:?}")));
        }
    }
    (n, None)
}

fn check_sigma_limit(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 20;
    for _ in 0..n {
        let k: f64 = rng.gen_range(0.2..2.0);
        let alpha: f64 = rng.gen_range(0.0..3.0);
        let spec = make_impedance_scattered(k, alpha).unwrap();
        let l = k * 10f64.powf(rng.gen_range(3.0..7.0));
        let s = spec.sigma.eval_real(l).unwrap();
        if (s - 1.0).norm() > 3.0 * k * alpha / l + 1e-14 {
            return (n, Some(format!("k = {k}, alpha = {alpha}, lambda = {l}: sigma = {s}")));
        }
    }
    (n, None)
}

fn check_contours(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 10;
    for _ in 0..n {
        let alpha = [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
        let spec = make_impedance_scattered(1.0, alpha).unwrap();
        let xx: f64 = rng.gen_range(0.3..2.0);
        let y = xx * rng.gen_range(1.0..2.0);
        let r = req(spec, [xx, 0.5 * y], [0.0, 0.5 * y]);
        let g = Geometry::new(&spec, r.x, r.x0);
        let plan = default_plan(&spec, &g).unwrap();
        let a = eval_with_plan(&r, &ContourPlan { variant: Variant::Contour1, ..plan });
        let b = eval_with_plan(&r, &ContourPlan { variant: Variant::Original, ..plan });
        match (a, b) {
            (Ok(a), Ok(b)) if rel(a, b) < 1e-9 => {}
            other => return (n, Some(format!("alpha = {alpha}, X = {xx}, Y = {y}: {other:?}"))),
        }
    }
    (n, None)
}

fn check_oracle(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 4;
    for _ in 0..n {
        let spec = make_impedance_scattered(1.0, rng.gen_range(0.0..2.0)).unwrap();
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(0.2..1.5)];
        let x0 = [0.0, rng.gen_range(0.2..1.5)];
        let a = sommerfeld_reference(&spec, x, x0, 1e-13).map(|o| o.value);
        let b = eval_kernel(&req(spec, x, x0));
        match (a, b) {
            (Ok(a), Ok(b)) if rel(b, a) < 1e-10 => {}
            other => return (n, Some(format!("x = {x:?}, x0 = {x0:?}: {other:?}"))),
        }
    }
    (n, None)
}

fn check_oracle_self(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 3;
    for _ in 0..n {
        let spec = make_impedance_scattered(1.0, 1.0).unwrap();
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(0.3..1.5)];
        let x0 = [0.0, rng.gen_range(0.3..1.5)];
        let a = sommerfeld_reference(&spec, x, x0, 1e-10).map(|o| o.value);
        let b = sommerfeld_reference(&spec, x, x0, 1e-13).map(|o| o.value);
        match (a, b) {
            (Ok(a), Ok(b)) if rel(a, b) < 1e-10 => {}
            other => return (n, Some(format!("x = {x:?}, x0 = {x0:?}: {other:?}"))),
        }
    }
    (n, None)
}

fn random_charges(rng: &mut ChaCha8Rng, center: Point2, half: f64, n: usize) -> Vec<(Point2, Complex64)> {
    (0..n)
        .map(|_| {
            let p = [center[0] + rng.gen_range(-half..half), center[1] + rng.gen_range(-half..half)];
            (p, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect()
}

fn check_m2m(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 10;
    for _ in 0..n {
        let k: f64 = rng.gen_range(0.1..2.0);
        let child = [rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25)];
        let parts = random_charges(rng, child, 0.25, 5);
        let m = s2m(&parts, child, k, 30).unwrap();
        let shifted = m2m(&m, [0.0, 0.0], 30).unwrap();
        let direct = s2m(&parts, [0.0, 0.0], k, 30).unwrap();
        let err = shifted.coeffs.iter().zip(&direct.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if err > 1e-10 {
            return (n, Some(format!("k = {k}, child = {child:?}: max error {err:e}")));
        }
    }
    (n, None)
}

fn check_chain(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let kernels = sample_kernels();
    let mut n = 0;
    for (i, (name, spec)) in kernels.iter().enumerate() {
        let tol = if i % 2 == 0 { 1e-6 } else { 1e-9 };
        for _ in 0..2 {
            n += 1;
            match translation_chain(spec, tol, rng) {
                Ok(c) if c.relative_error() <= 10.0 * tol => {}
                Ok(c) => return (n, Some(format!("{name}: {}, relative error {:e}", c.description, c.relative_error()))),
                Err(e) => return (n, Some(format!("{name}: {e}"))),
            }
        }
    }
    (n, None)
}

/// One kernel of every family, with three-layer wavenumbers `(1.5, 1, 2)` and
/// `d = 1` (no guided modes).
pub fn sample_kernels() -> Vec<(&'static str, KernelSpec)> {
    use crate::greens::{make_three_layer, ThreeLayerComponent as C};
    let p = ThreeLayerParams::new(1.5, 1.0, 2.0, 1.0).unwrap();
    vec![
        ("free", make_free_space(1.0)),
        ("dirichlet", make_dirichlet_scattered(1.0)),
        ("impedance", make_impedance_scattered(1.0, 1.0).unwrap()),
        ("three-layer:s1", make_three_layer(p, C::S1)),
        ("three-layer:s2t", make_three_layer(p, C::S2t)),
        ("three-layer:s2b", make_three_layer(p, C::S2b)),
        ("three-layer:s3", make_three_layer(p, C::S3)),
    ]
}

/// Height interval of the target layer, `margin` inside its boundaries and at
/// most `height` tall.
pub fn target_strip(spec: &KernelSpec, margin: f64, height: f64) -> (f64, f64) {
    use crate::greens::{SigmaFunction, ThreeLayerComponent as C};
    let d = match spec.sigma {
        SigmaFunction::ThreeLayer { params, .. } => params.d,
        _ => 0.0,
    };
    match spec.family {
        Family::ThreeLayer(C::S2t | C::S2b) => ((-d + margin).max(-margin - height), -margin),
        Family::ThreeLayer(C::S3) => (-d - margin - height, -d - margin),
        _ => (margin, margin + height),
    }
}

/// Height interval of the source layer.
pub fn source_strip(margin: f64, height: f64) -> (f64, f64) {
    (margin, margin + height)
}

/// Result of one single-charge translation chain.
#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub value: Complex64,
    pub exact: Complex64,
    pub order: usize,
    pub description: String,
}

impl ChainOutcome {
    pub fn relative_error(&self) -> f64 {
        rel(self.value, self.exact)
    }
}

/// S2M, M2M, M2L, L2L and L2T for one charge in a random two-level box
/// geometry that just meets the FMM admissibility ratio, with the FMM's order
/// and quadrature budgets for `tol`.
pub fn translation_chain(spec: &KernelSpec, tol: f64, rng: &mut ChaCha8Rng) -> Result<ChainOutcome> {
    use crate::fmm::MAC_RATIO;
    use crate::translations::m2l_free_space;
    let h = 0.15;
    let radius = h * std::f64::consts::SQRT_2;
    let (tlo, thi) = target_strip(spec, h, 0.8);
    let (slo, shi) = source_strip(h, 0.8);
    if !(thi > tlo) {
        return Err(Error::Domain(format!("target layer too thin for boxes of half-width {h}")));
    }
    let yc = rng.gen_range(tlo..=thi);
    let y0c = rng.gen_range(slo..shi);
    let free = spec.family == Family::FreeSpace;
    let yy = if free { yc - y0c } else { spec.effective_y(yc, y0c) };
    let rho_min = yy.abs().max(2.0 * MAC_RATIO * radius);
    let rho = rng.gen_range(rho_min..rho_min + 1.5);
    let dx = (rho * rho - yy * yy).max(0.0).sqrt() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let sc = [0.0, y0c];
    let tc = [dx, yc];
    let mut child = |c: Point2| -> (Point2, Point2) {
        let cc = [c[0] + 0.5 * h * rng.gen_range(-1.0f64..1.0).signum(), c[1] + 0.5 * h * rng.gen_range(-1.0f64..1.0).signum()];
        let p = [cc[0] + 0.499 * h * rng.gen_range(-1.0..1.0), cc[1] + 0.499 * h * rng.gen_range(-1.0..1.0)];
        (cc, p)
    };
    let (schild, x0) = child(sc);
    let (tchild, x) = child(tc);
    let q = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let order = crate::expansions::estimate_order(
        2.0 * radius,
        ModifiedDistance { rho: 2.0 * MAC_RATIO * radius },
        tol / 10.0,
        spec.k_max(),
    )?;
    let m = m2m(&s2m(&[(x0, q)], schild, spec.k_source, order)?, sc, order)?;
    let l = if free {
        m2l_free_space(&m, tc, order)?
    } else {
        let mut l = m2l_apply(&m2l_matrix(spec, sc, tc, order, order, (tol * 1e-3).clamp(1e-13, 1e-8))?, &m)?;
        l.center = tc;
        l
    };
    let value = l2t(&l2l(&l, tchild, order)?, x)?;
    let exact = q * eval_kernel(&req(*spec, x, x0))?;
    Ok(ChainOutcome {
        value,
        exact,
        order,
        description: format!("source {x0:?} in box {sc:?}, target {x:?} in box {tc:?}, order {order}"),
    })
}

fn check_m2l_reuse(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 3;
    for _ in 0..n {
        let spec = make_dirichlet_scattered(rng.gen_range(0.2..2.0));
        let shift = rng.gen_range(-4.0..4.0f64).round();
        let a = m2l_matrix(&spec, [0.0, 0.5], [1.5, 0.75], 10, 10, 1e-12).unwrap();
        let b = m2l_matrix(&spec, [shift, 0.5], [1.5 + shift, 0.75], 10, 10, 1e-12).unwrap();
        let diff = a.entries.iter().zip(&b.entries).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let scale = a.entries.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if diff > 1e-13 * scale {
            return (n, Some(format!("shift {shift}: max difference {diff:e}")));
        }
    }
    (n, None)
}

fn check_fmm(rng: &mut ChaCha8Rng, _: BranchRule) -> (usize, Option<String>) {
    let n = 2;
    for _ in 0..n {
        let spec = make_impedance_scattered(1.0, rng.gen_range(0.0..2.0)).unwrap();
        let sources: Vec<Particle> = (0..100)
            .map(|_| Particle {
                position: [rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0)],
                charge: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            })
            .collect();
        let targets: Vec<Point2> = (0..60).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0)]).collect();
        let mut job = ConvolveJob::new(spec, sources, targets, 1e-6);
        job.max_leaf = 8;
        match (convolve(&job), direct_sum(&job)) {
            (Ok(a), Ok(b)) if relative_l2(&a, &b) <= job.tol => {}
            (Ok(a), Ok(b)) => return (n, Some(format!("{:?}: relative error {:e}", spec.sigma, relative_l2(&a, &b)))),
            other => return (n, Some(format!("{other:?}"))),
        }
    }
    (n, None)
}
