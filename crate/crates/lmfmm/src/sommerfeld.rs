//! Numerical evaluation of canonical Sommerfeld integrals.
//!
//! The real line is cut at the sorted branch wavenumbers `κ_1 < … < κ_m = K`.
//! Finite pieces use `λ = m − h cos φ`, which removes the square-root endpoint
//! behaviour. The two tails `|λ| > K` use `t = √(λ² − K²)`, so that
//! `dλ / w_K = dt / λ` and every radical is analytic near `t = 0`.
//!
//! In the tail variable the integrand of the right tail behaves like
//! `e^{itX − tY}`. North/south geometries integrate along real `t` with a
//! Laguerre rule of rate `Y`. East/west geometries use contour 1: Gauss on
//! `[0, c]`, then the vertical line `t = c ± is` where `e^{iλX}` decays.
//! Contour 2, the polar-variable deformation, is kept for cross-checks.
//!
//! All exponentials are accumulated in log form: in expansion integrals the
//! power factors grow like `λ^p` while `e^{−λY}` underflows.

use crate::error::{Error, Result};
use crate::greens::{KernelSpec, SigmaFunction, SpectralPoint};
use crate::quadrature::{cached, QuadratureRule, RuleKind, MAX_LAGUERRE, MAX_LEGENDRE};
use num_complex::Complex64;
use std::f64::consts::PI;

const I: Complex64 = Complex64::new(0.0, 1.0);
const MAX_DOUBLINGS: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Real tail variable, Laguerre decay from the vertical separation.
    Original,
    /// Vertical shift by `c` in the tail variable.
    Contour1,
    /// Polar-variable deformation; same-wavenumber kernels only.
    Contour2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPlan {
    pub direction: Direction,
    pub variant: Variant,
    pub shift_c: f64,
    pub n_prop: usize,
    pub n_evan: usize,
    pub n_segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRequest {
    pub spec: KernelSpec,
    pub x: [f64; 2],
    pub x0: [f64; 2],
    pub tol: f64,
}

/// North/south when the vertical separation dominates, else east/west.
pub fn choose_direction(dx: f64, dy_eff: f64) -> Result<Direction> {
    if dx == 0.0 && dy_eff == 0.0 {
        return Err(Error::Geometry("zero displacement has no direction".into()));
    }
    Ok(if dy_eff.abs() >= dx.abs() {
        if dy_eff >= 0.0 {
            Direction::North
        } else {
            Direction::South
        }
    } else if dx > 0.0 {
        Direction::East
    } else {
        Direction::West
    })
}

/// Geometry of one canonical integral: `e^{iλX} e^{−w_k a} e^{w_{k0} b}`.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub x: f64,
    /// Target height `τ y + d`.
    pub a: f64,
    /// Source height `s y0`.
    pub b: f64,
}

impl Geometry {
    pub fn new(spec: &KernelSpec, target: [f64; 2], source: [f64; 2]) -> Self {
        Geometry {
            x: target[0] - source[0],
            a: spec.target_height(target[1]),
            b: spec.source_height(source[1]),
        }
    }

    pub fn y(&self) -> f64 {
        self.a - self.b
    }

    pub fn rho(&self) -> f64 {
        self.x.hypot(self.y())
    }
}

/// One quadrature node of a canonical integral.
///
/// The contribution to the integral is `amp · exp(log)`; the split keeps the
/// exponential part in log form.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub lambda: Complex64,
    pub w_target: Complex64,
    pub w_source: Complex64,
    pub amp: Complex64,
    pub log: Complex64,
}

impl Node {
    pub fn value(&self) -> Complex64 {
        self.amp * self.log.exp()
    }
}

/// Local factor `η = i(λ + τ w_k)/k`.
pub fn eta(spec: &KernelSpec, n: &Node) -> Complex64 {
    I * (n.lambda + spec.orientation as f64 * n.w_target) / spec.k_target
}

/// Multipole factor `ζ = −i(λ − s w_{k0})/k0`.
pub fn zeta(spec: &KernelSpec, n: &Node) -> Complex64 {
    -I * (n.lambda - spec.sign as f64 * n.w_source) / spec.k_source
}

/// Something that sums node contributions and can compare two estimates.
pub trait Accumulator {
    fn add(&mut self, spec: &KernelSpec, node: &Node);
    /// `(difference, magnitude)` between two estimates of the same quantity.
    fn compare(&self, other: &Self) -> (f64, f64);
    fn estimate(&self) -> Complex64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Scalar(pub Complex64);

impl Accumulator for Scalar {
    fn add(&mut self, _: &KernelSpec, node: &Node) {
        self.0 += node.value();
    }
    fn compare(&self, other: &Self) -> (f64, f64) {
        ((self.0 - other.0).norm(), self.0.norm().max(other.0.norm()))
    }
    fn estimate(&self) -> Complex64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerBase {
    Eta,
    Zeta,
}

/// Integrals of the canonical integrand times `base^m` for `m ∈ [lo, hi]`.
///
/// `weights[m − lo]` scales each entry in the convergence test, e.g. by the
/// Bessel factor it will multiply.
#[derive(Debug, Clone)]
pub struct Powers {
    pub base: PowerBase,
    pub lo: i64,
    pub values: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl Powers {
    pub fn new(base: PowerBase, lo: i64, hi: i64, weights: Vec<f64>) -> Self {
        let n = (hi - lo + 1) as usize;
        assert_eq!(weights.len(), n);
        Powers { base, lo, values: vec![Complex64::new(0.0, 0.0); n], weights }
    }

    pub fn get(&self, m: i64) -> Complex64 {
        self.values[(m - self.lo) as usize]
    }
}

impl Accumulator for Powers {
    fn add(&mut self, spec: &KernelSpec, node: &Node) {
        let z = match self.base {
            PowerBase::Eta => eta(spec, node),
            PowerBase::Zeta => zeta(spec, node),
        };
        let lz = z.ln();
        for (j, v) in self.values.iter_mut().enumerate() {
            let m = (self.lo + j as i64) as f64;
            *v += node.amp * (node.log + m * lz).exp();
        }
    }
    fn compare(&self, other: &Self) -> (f64, f64) {
        let mut d: f64 = 0.0;
        let mut s: f64 = 0.0;
        for j in 0..self.values.len() {
            let w = self.weights[j];
            d = d.max((self.values[j] - other.values[j]).norm() * w);
            s = s.max(self.values[j].norm().max(other.values[j].norm()) * w);
        }
        (d, s)
    }
    fn estimate(&self) -> Complex64 {
        self.values.first().copied().unwrap_or_default()
    }
}

/// `∫ … η^p ζ^q` for `|p| ≤ P`, `|q| ≤ Q`, accumulated as an outer product.
#[derive(Debug, Clone)]
pub struct PowerMatrix {
    pub p: usize,
    pub q: usize,
    /// Row-major `(2P+1) × (2Q+1)`, row index `p + P`.
    pub values: Vec<Complex64>,
    pub weights_p: Vec<f64>,
    pub weights_q: Vec<f64>,
    row: Vec<Complex64>,
    col: Vec<Complex64>,
}

impl PowerMatrix {
    pub fn new(p: usize, q: usize, weights_p: Vec<f64>, weights_q: Vec<f64>) -> Self {
        assert_eq!(weights_p.len(), 2 * p + 1);
        assert_eq!(weights_q.len(), 2 * q + 1);
        PowerMatrix {
            p,
            q,
            values: vec![Complex64::new(0.0, 0.0); (2 * p + 1) * (2 * q + 1)],
            weights_p,
            weights_q,
            row: vec![Complex64::new(0.0, 0.0); 2 * p + 1],
            col: vec![Complex64::new(0.0, 0.0); 2 * q + 1],
        }
    }
}

impl Accumulator for PowerMatrix {
    fn add(&mut self, spec: &KernelSpec, node: &Node) {
        let u = eta(spec, node).ln();
        let v = zeta(spec, node).ln();
        let (pf, qf) = (self.p as f64, self.q as f64);
        let ra = pf * u.re.abs();
        let rb = qf * v.re.abs();
        // Split the common exponent so both factors peak at the same size.
        let alpha = 0.5 * (node.log.re + rb - ra);
        let rest = node.log - alpha;
        for (j, r) in self.row.iter_mut().enumerate() {
            let m = j as f64 - pf;
            *r = (alpha + m * u).exp();
        }
        for (j, c) in self.col.iter_mut().enumerate() {
            let m = j as f64 - qf;
            *c = node.amp * (rest + m * v).exp();
        }
        let nq = 2 * self.q + 1;
        for (i, r) in self.row.iter().enumerate() {
            let line = &mut self.values[i * nq..(i + 1) * nq];
            for (e, c) in line.iter_mut().zip(&self.col) {
                *e += r * c;
            }
        }
    }
    fn compare(&self, other: &Self) -> (f64, f64) {
        let nq = 2 * self.q + 1;
        let mut d: f64 = 0.0;
        let mut s: f64 = 0.0;
        for i in 0..2 * self.p + 1 {
            for j in 0..nq {
                let w = self.weights_p[i] * self.weights_q[j];
                let a = self.values[i * nq + j];
                let b = other.values[i * nq + j];
                d = d.max((a - b).norm() * w);
                s = s.max(a.norm().max(b.norm()) * w);
            }
        }
        (d, s)
    }
    fn estimate(&self) -> Complex64 {
        self.values[self.p * (2 * self.q + 1) + self.q]
    }
}

/// Which parts of the real line to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parts {
    All,
    /// `|λ| < K`.
    Propagating,
    /// `|λ| > K`.
    Evanescent,
}

/// The node generator for one canonical integral.
pub struct Integral<'a> {
    pub spec: &'a KernelSpec,
    pub geom: Geometry,
    kappa: Vec<f64>,
}

fn legendre(n: usize) -> Result<std::sync::Arc<QuadratureRule>> {
    cached(RuleKind::Legendre, n.clamp(1, MAX_LEGENDRE))
}

fn laguerre(n: usize) -> Result<std::sync::Arc<QuadratureRule>> {
    cached(RuleKind::Laguerre, n.clamp(1, MAX_LAGUERRE))
}

// dλ = (t/λ) dt; the left tail runs from −K to −∞, which flips the sign.
fn tail_jacobian(pt: &SpectralPoint, t: Complex64) -> Complex64 {
    let j = t / pt.lambda();
    match pt {
        SpectralPoint::Tail { negative: true, .. } => -j,
        _ => j,
    }
}

/// Laguerre rate on the contour-1 vertical line. Using `|X|` alone converges
/// slowly when `c|X|` is small because the algebraic factor varies on the
/// scale `c`, so the nodes are compressed by up to a factor 3.
pub fn contour1_rate(x: f64, c: f64) -> f64 {
    x.abs() * (6.0 / (c * x.abs())).clamp(1.0, 3.0)
}

/// Default shift for contour 1.
pub fn default_shift(spec: &KernelSpec, x: f64) -> f64 {
    spec.k_max().max(2.0 / x.abs())
}

impl<'a> Integral<'a> {
    pub fn new(spec: &'a KernelSpec, geom: Geometry) -> Self {
        Integral { spec, geom, kappa: spec.wavenumbers() }
    }

    pub fn k_max(&self) -> f64 {
        *self.kappa.last().unwrap()
    }

    fn node_at(&self, pt: SpectralPoint, jac: Complex64, log_w: f64, extra: Complex64) -> Result<Node> {
        let spec = self.spec;
        let lambda = pt.lambda();
        let w_target = pt.w(spec.k_target);
        let w_source = if spec.same_wavenumber() { w_target } else { pt.w(spec.k_source) };
        let sigma = spec.sigma.eval(&pt)?;
        let g = &self.geom;
        let log = I * lambda * g.x - w_target * g.a + w_source * g.b + log_w + extra;
        let amp = sigma / (4.0 * PI * w_target) * jac;
        Ok(Node { lambda, w_target, w_source, amp, log })
    }

    // Real-axis piece [lo, hi] with λ = m − h cos φ. A nearby impedance pole
    // sits at φ ≈ p/√(Kh) from either end; panels are graded down to it.
    fn real_piece(&self, lo: f64, hi: f64, n: usize, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let rule = legendre(n)?;
        let h = 0.5 * (hi - lo);
        let m = 0.5 * (hi + lo);
        let mut edges = vec![0.0, PI];
        if let Some(p) = self.spec.sigma.pole_distance() {
            let gap = p / (self.k_max() * h).sqrt();
            let mut e = 0.25 * PI;
            while e > gap {
                edges.push(e);
                edges.push(PI - e);
                e *= 0.5;
            }
            if edges.len() > 2 {
                edges.push(0.5 * PI);
            }
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let half_w = 0.5 * (b - a);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let phi = a + half_w * (x + 1.0);
                let lambda = m - h * phi.cos();
                let half = 0.5 * phi;
                let d_lo = 2.0 * h * half.sin().powi(2);
                let d_hi = 2.0 * h * half.cos().powi(2);
                let pt = SpectralPoint::Piece { lambda, lo, hi, d_lo, d_hi };
                let jac = Complex64::new(h * phi.sin() * half_w * w, 0.0);
                f(&self.node_at(pt, jac, 0.0, Complex64::new(0.0, 0.0))?);
            }
        }
        Ok(())
    }

    /// `|λ| < K`, split at every branch wavenumber.
    pub fn propagating_nodes(&self, n: usize, f: &mut dyn FnMut(&Node)) -> Result<()> {
        if self.spec.sigma.has_real_axis_poles() {
            return Err(Error::Unsupported(
                "guided-mode poles on the real axis; only tail integrals are available for this kernel".into(),
            ));
        }
        let k = &self.kappa;
        self.real_piece(-k[0], k[0], n, f)?;
        for win in k.windows(2) {
            self.real_piece(win[0], win[1], n, f)?;
            self.real_piece(-win[1], -win[0], n, f)?;
        }
        Ok(())
    }

    fn tail_point(&self, t: Complex64, negative: bool) -> SpectralPoint {
        SpectralPoint::Tail { t, kref: self.k_max(), negative }
    }

    // Distance from t = 0 to the nearest singularity in the tail variable.
    fn tail_singularity_distance(&self) -> f64 {
        let kk = self.k_max();
        let mut d = kk;
        for &k in &self.kappa {
            if k < kk {
                d = d.min(((kk - k) * (kk + k)).sqrt());
            }
        }
        if let Some(p) = self.spec.sigma.pole_distance() {
            d = d.min(p);
        }
        d
    }

    // Gauss panels on real t ∈ [0, c], graded towards t = 0.
    fn segment_nodes(&self, c: f64, n: usize, negative: bool, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let delta = self.tail_singularity_distance();
        let mut edges = vec![c];
        let mut e = c;
        while e > 2.0 * delta && edges.len() < 40 {
            e *= 0.5;
            edges.push(e);
        }
        edges.push(0.0);
        edges.reverse();
        let rule = legendre(n)?;
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let h = 0.5 * (b - a);
            let m = 0.5 * (b + a);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = m + h * x;
                let pt = self.tail_point(Complex64::new(t, 0.0), negative);
                let jac = tail_jacobian(&pt, Complex64::new(t, 0.0)) * (h * w);
                f(&self.node_at(pt, jac, 0.0, Complex64::new(0.0, 0.0))?);
            }
        }
        Ok(())
    }

    // Ray t = c + u·e^{iφ}, u ≥ 0, with e^{iφ} = (Y + iX)/ρ: the linear phase
    // e^{t(iX − Y)} decays like e^{−uρ} along it.
    fn laguerre_ray(&self, c: f64, xs: f64, y: f64, n: usize, negative: bool, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let rule = laguerre(n)?;
        let rate = xs.hypot(y);
        let dir = Complex64::new(y, xs) / rate;
        for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            let t = Complex64::new(c, 0.0) + dir * (x / rate);
            let pt = self.tail_point(t, negative);
            let jac = tail_jacobian(&pt, t) * dir;
            f(&self.node_at(pt, jac, lw - rate.ln(), Complex64::new(x, 0.0))?);
        }
        Ok(())
    }

    // Heights of the singularities on the imaginary t axis: the branch points
    // of every radical and the impedance pole.
    fn singular_heights(&self) -> Vec<f64> {
        let kk = self.k_max();
        let mut h: Vec<f64> = self.kappa.iter().map(|&k| ((kk - k) * (kk + k)).sqrt()).collect();
        h.push(kk);
        if let Some(p) = self.spec.sigma.pole_distance() {
            h.push(p);
        }
        h.retain(|&v| v > 0.0);
        h
    }

    // Vertical line t = c + i·dir·s: graded Gauss panels on [0, S] past the
    // singularities, then Laguerre with rate `rate` from S.
    fn vertical_nodes(&self, c: f64, dir: f64, rate: f64, n_seg: usize, n_evan: usize, negative: bool, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let heights = self.singular_heights();
        let top = heights.iter().cloned().fold(0.0, f64::max);
        let s_end = if c >= 2.0 * top { 0.0 } else { 2.0 * top };
        let edges = graded_edges(s_end, &heights, c);
        let along = Complex64::new(0.0, dir);
        let rule = legendre(n_seg)?;
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let h = 0.5 * (b - a);
            let m = 0.5 * (b + a);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = Complex64::new(c, 0.0) + along * (m + h * x);
                let pt = self.tail_point(t, negative);
                let jac = tail_jacobian(&pt, t) * along * (h * w);
                f(&self.node_at(pt, jac, 0.0, Complex64::new(0.0, 0.0))?);
            }
        }
        let rule = laguerre(n_evan)?;
        for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            let t = Complex64::new(c, 0.0) + along * (s_end + x / rate);
            let pt = self.tail_point(t, negative);
            let jac = tail_jacobian(&pt, t) * along;
            f(&self.node_at(pt, jac, lw - rate.ln(), Complex64::new(x, 0.0))?);
        }
        Ok(())
    }

    /// Both tails `|λ| > K` in the tail variable: Gauss on real `t ∈ [0, c′]`,
    /// `c′ = max(K, 2/Y)`, then Laguerre along the ray from `c′` on which
    /// `e^{iλX − tY}` has no oscillating linear phase.
    pub fn original_tail_nodes(&self, n_seg: usize, n_evan: usize, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let y = self.geom.y();
        if !(y > 0.0) {
            return Err(Error::Geometry(format!("real-axis tail needs positive effective height, got {y}")));
        }
        let c = self.k_max().max(2.0 / y);
        for negative in [false, true] {
            // The left tail sees e^{−i|λ|X}.
            let xs = if negative { -self.geom.x } else { self.geom.x };
            self.segment_nodes(c, n_seg, negative, f)?;
            self.laguerre_ray(c, xs, y, n_evan, negative, f)?;
        }
        Ok(())
    }

    /// Both tails on contour 1 with shift `c`.
    pub fn contour1_tail_nodes(&self, c: f64, n_seg: usize, n_evan: usize, f: &mut dyn FnMut(&Node)) -> Result<()> {
        let x = self.geom.x;
        if x == 0.0 {
            return Err(Error::Geometry("contour 1 needs a nonzero horizontal displacement".into()));
        }
        if !(c > 0.0) {
            return Err(Error::Domain(format!("contour shift must be positive, got {c}")));
        }
        if let Some(p) = self.spec.sigma.pole_distance() {
            if c < 1e-3 * self.k_max() {
                let lambda = Complex64::new(self.k_max() * self.k_max() - p * p, 0.0).sqrt();
                return Err(Error::PoleNearPath { lambda });
            }
        }
        let rate = contour1_rate(x, c);
        for negative in [false, true] {
            // The left tail sees e^{−i|λ|X}.
            let dir = if negative { -x.signum() } else { x.signum() };
            self.segment_nodes(c, n_seg, negative, f)?;
            self.vertical_nodes(c, dir, rate, n_seg, n_evan, negative, f)?;
        }
        Ok(())
    }

    /// Integrates `parts` of the real line on `plan`, doubling all node
    /// counts until two successive estimates agree to `tol`. The first
    /// comparison is between half and full plan counts.
    pub fn integrate<A: Accumulator + Clone>(&self, plan: &ContourPlan, parts: Parts, tol: f64, zero: A) -> Result<A> {
        let mut prev: Option<A> = None;
        let mut last_err = f64::INFINITY;
        for level in 0..=MAX_DOUBLINGS {
            let s = 1usize << level;
            let capped = plan.n_evan * s > 2 * MAX_LAGUERRE
                || plan.n_prop * s > 2 * MAX_LEGENDRE
                || plan.n_segment * s > 2 * MAX_LEGENDRE;
            if capped {
                let est = prev.as_ref().map(|p| p.estimate()).unwrap_or_default();
                return Err(Error::NoConvergence { estimate: est, error: last_err });
            }
            let mut acc = zero.clone();
            self.single_pass(plan, parts, s, &mut acc)?;
            if let Some(p) = &prev {
                let (d, m) = acc.compare(p);
                if d <= tol * m || converged_estimate(d, m) <= tol {
                    return Ok(acc);
                }
                last_err = d / m.max(f64::MIN_POSITIVE);
                if level == MAX_DOUBLINGS {
                    return Err(Error::NoConvergence { estimate: acc.estimate(), error: d / m.max(f64::MIN_POSITIVE) });
                }
            }
            prev = Some(acc);
        }
        unreachable!()
    }

    /// One evaluation with all node counts multiplied by `halves / 2`.
    pub fn single_pass<A: Accumulator>(&self, plan: &ContourPlan, parts: Parts, halves: usize, acc: &mut A) -> Result<()> {
        let spec = self.spec;
        let mut f = |n: &Node| acc.add(spec, n);
        let n = |base: usize| (base * halves).div_ceil(2);
        if parts != Parts::Evanescent {
            self.propagating_nodes(n(plan.n_prop), &mut f)?;
        }
        if parts != Parts::Propagating {
            match plan.variant {
                Variant::Original => self.original_tail_nodes(n(plan.n_segment), n(plan.n_evan), &mut f)?,
                Variant::Contour1 => {
                    self.contour1_tail_nodes(plan.shift_c, n(plan.n_segment), n(plan.n_evan), &mut f)?
                }
                Variant::Contour2 => {
                    return Err(Error::Unsupported("contour 2 is only available for scalar kernel values".into()))
                }
            }
        }
        Ok(())
    }
}

/// Error of the finer of two estimates differing by `d` at magnitude `m`.
/// Gauss and Gauss-Laguerre rules on these analytic integrands converge at
/// least like `e(2n) ≲ e(n)^{3/2}` once resolved, with a factor 10 margin.
fn converged_estimate(d: f64, m: f64) -> f64 {
    if m == 0.0 {
        return if d == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let rel = d / m;
    if rel > 1e-4 {
        return f64::INFINITY;
    }
    10.0 * rel.powf(1.5)
}

/// Panel edges on `[0, end]`, refined geometrically towards each point in
/// `points` down to width `eps`.
fn graded_edges(end: f64, points: &[f64], eps: f64) -> Vec<f64> {
    if end <= 0.0 {
        return vec![];
    }
    let mut e = vec![0.0, end];
    for &p in points {
        if p <= 0.0 || p >= end {
            continue;
        }
        e.push(p);
        let mut w = eps;
        while w < end {
            for q in [p - w, p + w] {
                if q > 0.0 && q < end {
                    e.push(q);
                }
            }
            w *= 2.0;
        }
    }
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e.dedup_by(|a, b| (*a - *b).abs() <= 1e-3 * eps);
    // A merged group keeps its first member; the end must stay exact.
    *e.last_mut().unwrap() = end;
    e
}

/// Contour choice for a geometry.
pub fn default_plan(spec: &KernelSpec, geom: &Geometry) -> Result<ContourPlan> {
    let direction = choose_direction(geom.x, geom.y())?;
    let r = geom.rho();
    let n_prop = 20usize.max((1.2 * spec.k_max() * r).ceil() as usize + 15);
    let (variant, shift_c) = match direction {
        Direction::East | Direction::West => (Variant::Contour1, default_shift(spec, geom.x)),
        _ => (Variant::Original, spec.k_max().max(2.0 / geom.y().abs())),
    };
    Ok(ContourPlan { direction, variant, shift_c, n_prop, n_evan: 40, n_segment: 24 })
}

fn checked_geometry(req: &EvalRequest) -> Result<Geometry> {
    req.spec.check_pair(req.x, req.x0)?;
    if !(req.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", req.tol)));
    }
    let mut g = Geometry::new(&req.spec, req.x, req.x0);
    if g.y() < 0.0 {
        // Only the free-space kernel gets here; it is symmetric in its arguments.
        g = Geometry::new(&req.spec, req.x0, req.x);
    }
    Ok(g)
}

/// Propagating plus evanescent parts on the real tail variable.
pub fn eval_split(req: &EvalRequest, plan: &ContourPlan) -> Result<Complex64> {
    let g = checked_geometry(req)?;
    let original = ContourPlan { variant: Variant::Original, ..*plan };
    Ok(Integral::new(&req.spec, g).integrate(&original, Parts::All, req.tol, Scalar::default())?.0)
}

/// `|λ| > K` on contour 1 with shift `c`.
pub fn eval_evanescent_contour1(req: &EvalRequest, c: f64) -> Result<Complex64> {
    let g = checked_geometry(req)?;
    let mut plan = default_plan(&req.spec, &g)?;
    plan.variant = Variant::Contour1;
    plan.shift_c = c;
    Ok(Integral::new(&req.spec, g).integrate(&plan, Parts::Evanescent, req.tol, Scalar::default())?.0)
}

/// Evaluation on an explicit plan.
pub fn eval_with_plan(req: &EvalRequest, plan: &ContourPlan) -> Result<Complex64> {
    let g = checked_geometry(req)?;
    if plan.variant == Variant::Contour2 {
        let prop = Integral::new(&req.spec, g).integrate(plan, Parts::Propagating, req.tol, Scalar::default())?.0;
        return Ok(prop + eval_evanescent_contour2(req, plan.shift_c)?);
    }
    Ok(Integral::new(&req.spec, g).integrate(plan, Parts::All, req.tol, Scalar::default())?.0)
}

/// The S2T primitive: direction choice, contour 1 for east/west geometries.
pub fn eval_kernel(req: &EvalRequest) -> Result<Complex64> {
    let g = checked_geometry(req)?;
    let plan = default_plan(&req.spec, &g)?;
    Ok(Integral::new(&req.spec, g).integrate(&plan, Parts::All, req.tol, Scalar::default())?.0)
}

/// Pieces of the contour-2 representation of one tail, in the normalisation
/// `∫_0^∞ e^{−tY} e^{iλX} σ(t)/λ dt`.
#[derive(Debug, Clone, Copy)]
pub struct Contour2Tail {
    pub k: f64,
    pub r: f64,
    pub theta: f64,
    pub c: f64,
    pub sigma: SigmaFunction,
}

impl Contour2Tail {
    pub fn new(spec: &KernelSpec, x: f64, y: f64, c: f64) -> Result<Self> {
        if !spec.same_wavenumber() || !matches!(spec.sigma, SigmaFunction::Constant(_) | SigmaFunction::Impedance { .. }) {
            return Err(Error::Unsupported("contour 2 needs one wavenumber and an image term in w_k only".into()));
        }
        if !(y > 0.0) || !(c > 0.0) {
            return Err(Error::Geometry(format!("contour 2 needs y > 0 and c > 0, got y = {y}, c = {c}")));
        }
        let theta = y.atan2(x);
        let k = spec.k_target;
        // The segment climbs the imaginary t axis to ik cosθ √(1+c²). A pole at
        // t = ikα above that point on the same side would be swept across.
        if let SigmaFunction::Impedance { alpha, .. } = spec.sigma {
            let top = theta.cos() * (1.0 + c * c).sqrt();
            if alpha * top > 0.0 && alpha.abs() > 0.9 * top.abs() {
                return Err(Error::PoleNearPath { lambda: Complex64::new(k * (1.0 - alpha * alpha), 0.0).sqrt() });
            }
        }
        Ok(Contour2Tail { k, r: x.hypot(y), theta, c, sigma: spec.sigma })
    }

    /// Smallest shift for which the segment passes above the impedance pole.
    pub fn min_shift(spec: &KernelSpec, x: f64, y: f64) -> f64 {
        match spec.sigma {
            SigmaFunction::Impedance { alpha, .. } => {
                let ct = y.atan2(x).cos();
                if alpha * ct <= 0.0 {
                    return 0.0;
                }
                let need = alpha.abs() / (0.9 * ct.abs());
                (need * need - 1.0).max(0.0).sqrt()
            }
            _ => 0.0,
        }
    }

    // t(u) = ik cosθ √(1+u²) + u k sinθ.
    fn t_of(&self, u: Complex64) -> Complex64 {
        let s = (1.0 + u * u).sqrt();
        I * self.k * self.theta.cos() * s + u * self.k * self.theta.sin()
    }

    fn integrand_log(&self, u: Complex64) -> Result<(Complex64, Complex64)> {
        let s = (1.0 + u * u).sqrt();
        let t = self.t_of(u);
        let pt = SpectralPoint::Tail { t, kref: self.k, negative: false };
        let sig = self.sigma.eval(&pt)?;
        Ok((sig / s, -self.k * self.r * u))
    }

    /// Integrand in the path variable `u`, including `dt/du`.
    pub fn integrand(&self, u: Complex64) -> Result<Complex64> {
        let (a, l) = self.integrand_log(u)?;
        Ok(a * l.exp())
    }

    /// Segment from `−i cosθ` to `c`, `n` Gauss nodes on `[0, 1]`.
    pub fn segment(&self, n: usize) -> Result<Complex64> {
        let rule = legendre(n)?;
        let slope = Complex64::new(self.c, self.theta.cos());
        let start = Complex64::new(0.0, -self.theta.cos());
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let u = start + slope * (0.5 * (x + 1.0));
            let (a, l) = self.integrand_log(u)?;
            neumaier(&mut sum, &mut comp, a * l.exp() * slope * (0.5 * w));
        }
        Ok(sum + comp)
    }

    /// `[c, ∞)` with an `n`-point Laguerre rule of rate `k r`.
    pub fn ray(&self, n: usize) -> Result<Complex64> {
        let rule = laguerre(n)?;
        let rate = self.k * self.r;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            let u = Complex64::new(self.c + x / rate, 0.0);
            let (a, l) = self.integrand_log(u)?;
            neumaier(&mut sum, &mut comp, a * (l + x + lw - rate.ln()).exp());
        }
        Ok(sum + comp)
    }
}

/// Compensated complex summation.
pub(crate) fn neumaier(sum: &mut Complex64, comp: &mut Complex64, v: Complex64) {
    fn step(s: &mut f64, c: &mut f64, v: f64) {
        let t = *s + v;
        if s.abs() >= v.abs() {
            *c += (*s - t) + v;
        } else {
            *c += (v - t) + *s;
        }
        *s = t;
    }
    step(&mut sum.re, &mut comp.re, v.re);
    step(&mut sum.im, &mut comp.im, v.im);
}

/// `|λ| > k` by contour 2 for kernels with one wavenumber and σ depending on
/// `w_k` only, in canonical normalisation.
pub fn eval_evanescent_contour2(req: &EvalRequest, c: f64) -> Result<Complex64> {
    let g = checked_geometry(req)?;
    let mut total = Complex64::new(0.0, 0.0);
    for xs in [g.x, -g.x] {
        let tail = Contour2Tail::new(&req.spec, xs, g.y(), c)?;
        let mut prev: Option<Complex64> = None;
        let mut n_seg = 64;
        let mut n_ray = 40;
        let v = loop {
            let v = tail.segment(n_seg)? + tail.ray(n_ray)?;
            if let Some(p) = prev {
                if (v - p).norm() <= req.tol * v.norm() {
                    break v;
                }
                if n_seg >= MAX_LEGENDRE {
                    return Err(Error::NoConvergence { estimate: v, error: (v - p).norm() / v.norm() });
                }
            }
            prev = Some(v);
            n_seg = (2 * n_seg).min(MAX_LEGENDRE);
            n_ray = (2 * n_ray).min(MAX_LAGUERRE);
        };
        total += v;
    }
    Ok(total / (4.0 * PI))
}

fn rotate_to_north(direction: Direction, x: f64, y: f64, l: i64) -> Result<(f64, f64, Complex64)> {
    let ok = match direction {
        Direction::North => y > 0.0,
        Direction::South => y < 0.0,
        Direction::East => x > 0.0,
        Direction::West => x < 0.0,
    };
    if !ok {
        return Err(Error::Geometry(format!("point ({x}, {y}) is not in the {direction:?} half-plane")));
    }
    // H_l e^{ilθ} picks up e^{−ilΔθ} when the point is rotated by Δθ.
    let (xr, yr, quarter_turns) = match direction {
        Direction::North => (x, y, 0),
        Direction::East => (-y, x, 1),
        Direction::South => (-x, -y, 2),
        Direction::West => (y, -x, 3),
    };
    let phase = (-I).powi(((l * quarter_turns) % 4) as i32);
    Ok((xr, yr, phase))
}

/// `H_l^{(1)}(βr) e^{ilθ}` from the plane-wave representation of the given
/// half-plane: `(1/iπ) ∫ e^{iλx − w y} ζ^l / w dλ`, `ζ = −i(λ − w)/β`.
pub fn plane_wave_hl(l: i64, direction: Direction, x: f64, y: f64, beta: f64) -> Result<Complex64> {
    if l.abs() > 60 {
        return Err(Error::OutOfRange(format!("plane-wave order {l} exceeds 60")));
    }
    let (xr, yr, phase) = rotate_to_north(direction, x, y, l)?;
    let spec = crate::greens::make_free_space(beta);
    let g = Geometry { x: xr, a: yr, b: 0.0 };
    let plan = default_plan(&spec, &g)?;
    let acc = Powers::new(PowerBase::Zeta, l, l, vec![1.0]);
    let v = Integral::new(&spec, g).integrate(&plan, Parts::All, 1e-13, acc)?.get(l);
    Ok(phase * v * 4.0 / I)
}

pub fn plane_wave_h0(direction: Direction, x: f64, y: f64, beta: f64) -> Result<Complex64> {
    plane_wave_hl(0, direction, x, y, beta)
}

/// The quadrature-convergence setting of the impedance half-space,
/// `∫_0^∞ e^{−ty} e^{ix√(t²+k²)} / √(t²+k²) · (t + ikα)/(t − ikα) dt`.
#[derive(Debug, Clone, Copy)]
pub struct QuadStudy {
    pub x: f64,
    pub y: f64,
    pub k: f64,
    pub c: f64,
    pub alpha: f64,
}

impl QuadStudy {
    pub fn integrand(&self, t: Complex64) -> Complex64 {
        let l = (t * t + self.k * self.k).sqrt();
        let ika = I * (self.k * self.alpha);
        (-t * self.y + I * self.x * l).exp() / l * (t + ika) / (t - ika)
    }

    /// Plain Laguerre rule of rate `y` on the real half-line.
    pub fn original(&self, n: usize) -> Result<Complex64> {
        let rule = laguerre(n)?;
        let mut s = Complex64::new(0.0, 0.0);
        let mut c = Complex64::new(0.0, 0.0);
        for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            let t = Complex64::new(x / self.y, 0.0);
            neumaier(&mut s, &mut c, self.integrand(t) * (x + lw).exp() / self.y);
        }
        Ok(s + c)
    }

    /// Contour 1, segment `[0, c]` with one Gauss rule.
    pub fn contour1_segment(&self, n: usize) -> Result<Complex64> {
        let rule = legendre(n)?;
        let h = 0.5 * self.c;
        let mut s = Complex64::new(0.0, 0.0);
        let mut c = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            neumaier(&mut s, &mut c, self.integrand(Complex64::new(h * (x + 1.0), 0.0)) * (h * w));
        }
        Ok(s + c)
    }

    /// Contour 1, vertical line from `c`, Laguerre in the line parameter.
    pub fn contour1_ray(&self, n: usize) -> Result<Complex64> {
        let rule = laguerre(n)?;
        let rate = contour1_rate(self.x, self.c);
        let dir = self.x.signum();
        let mut s = Complex64::new(0.0, 0.0);
        let mut c = Complex64::new(0.0, 0.0);
        for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            let t = Complex64::new(self.c, dir * x / rate);
            let v = self.integrand(t) * Complex64::new(0.0, dir) * (x + lw - rate.ln()).exp();
            neumaier(&mut s, &mut c, v);
        }
        Ok(s + c)
    }

    fn contour2(&self) -> Result<Contour2Tail> {
        let spec = crate::greens::make_impedance_scattered(self.k, self.alpha)?;
        Contour2Tail::new(&spec, self.x, self.y, self.c)
    }

    pub fn contour2_segment(&self, n: usize) -> Result<Complex64> {
        self.contour2()?.segment(n)
    }

    pub fn contour2_ray(&self, n: usize) -> Result<Complex64> {
        self.contour2()?.ray(n)
    }
}
