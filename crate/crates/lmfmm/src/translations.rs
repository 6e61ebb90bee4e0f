//! Translation operators.
//!
//! M2M and L2L are the free-space Helmholtz operators (Graf's addition
//! theorem for `J_n e^{inθ}`). The layered M2L is the matrix
//!
//! `A_pq = ∫ e^{iλX} e^{−w_k a} e^{w_{k0} b} η^p ζ^q σ/(4π w_k) dλ`
//!
//! between box centres, with `L_p = Σ_q A_pq M_q`. When `k = k0` the product
//! `η^p ζ^q` collapses to a single power of `η`, so only `2(P+Q)+1` integrals
//! are needed.

use crate::error::{Error, Result};
use crate::expansions::{bessel_waves, LocalExpansion, MultipoleExpansion, Point2};
use crate::greens::KernelSpec;
use crate::sommerfeld::{default_plan, Geometry, Integral, Parts, PowerBase, PowerMatrix, Powers};
use crate::special_functions::{bessel_j_seq, hankel1_seq};
use dashmap::DashMap;
use num_complex::Complex64;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

fn polar(d: [f64; 2]) -> (f64, f64) {
    (d[0].hypot(d[1]), d[1].atan2(d[0]))
}

/// Re-centres a multipole expansion: `M̃_p = Σ_q M_{p−q} J_q(k0|c|) e^{−iq arg c}`
/// with `c` the child centre relative to the parent.
pub fn m2m(child: &MultipoleExpansion, parent_center: Point2, order: usize) -> Result<MultipoleExpansion> {
    let c = [child.center[0] - parent_center[0], child.center[1] - parent_center[1]];
    let (r, th) = polar(c);
    let span = order + child.order;
    let w = bessel_waves(span, child.k0 * r, th, -1.0)?;
    let mut out = MultipoleExpansion::zero(parent_center, child.k0, order);
    let (o, s) = (order as i64, span as i64);
    for p in -o..=o {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in -(child.order as i64)..=child.order as i64 {
            let q = p - m;
            if q.abs() <= s {
                acc += child.coeff(m) * w[(q + s) as usize];
            }
        }
        out.coeffs[(p + o) as usize] = acc;
    }
    Ok(out)
}

/// Re-centres a local expansion: `L̃_q = Σ_m L_{q+m} J_m(k|c|) e^{im arg c}`
/// with `c` the child centre relative to the parent.
pub fn l2l(parent: &LocalExpansion, child_center: Point2, order: usize) -> Result<LocalExpansion> {
    let c = [child_center[0] - parent.center[0], child_center[1] - parent.center[1]];
    let (r, th) = polar(c);
    let span = order + parent.order;
    let w = bessel_waves(span, parent.k * r, th, 1.0)?;
    let mut out = LocalExpansion::zero(child_center, parent.k, order);
    let (o, s) = (order as i64, span as i64);
    for q in -o..=o {
        let mut acc = Complex64::new(0.0, 0.0);
        for n in -(parent.order as i64)..=parent.order as i64 {
            let m = n - q;
            if m.abs() <= s {
                acc += parent.coeff(n) * w[(m + s) as usize];
            }
        }
        out.coeffs[(q + o) as usize] = acc;
    }
    Ok(out)
}

/// Translation matrix between one source and one target box centre.
#[derive(Debug, Clone)]
pub struct M2LMatrix {
    pub source_center: Point2,
    pub target_center: Point2,
    pub k_target: f64,
    pub p: usize,
    pub q: usize,
    /// Row-major `(2P+1) × (2Q+1)`, entry `(p + P, q + Q)`.
    pub entries: Vec<Complex64>,
}

impl M2LMatrix {
    pub fn entry(&self, p: i64, q: i64) -> Complex64 {
        let nq = 2 * self.q + 1;
        self.entries[(p + self.p as i64) as usize * nq + (q + self.q as i64) as usize]
    }
}

fn abs_j(order: usize, z: f64) -> Result<Vec<f64>> {
    Ok(bessel_j_seq(order, z)?.into_iter().map(f64::abs).collect())
}

/// Builds `A_pq` for `|p| ≤ P`, `|q| ≤ Q`.
///
/// Entries are converged in the norm weighted by `|J_p(k ρ/4) J_q(k0 ρ/4)|`,
/// the size of the Bessel factors they meet for boxes admitted at modified
/// distance `ρ`.
pub fn m2l_matrix(spec: &KernelSpec, source_center: Point2, target_center: Point2, p: usize, q: usize, tol: f64) -> Result<M2LMatrix> {
    let g = Geometry::new(spec, target_center, source_center);
    let rho = g.rho();
    if !(g.y() >= 0.0) || rho == 0.0 {
        return Err(Error::Geometry(format!("M2L needs a positive modified separation, got X = {}, Y = {}", g.x, g.y())));
    }
    let plan = default_plan(spec, &g)?;
    let integral = Integral::new(spec, g);
    let np = 2 * p + 1;
    let nq = 2 * q + 1;
    let mut entries = vec![Complex64::new(0.0, 0.0); np * nq];
    if spec.same_wavenumber() {
        // τ = s gives ζ = 1/η, otherwise ζ = −η.
        let toeplitz = spec.orientation == spec.sign;
        let span = p + q;
        let wj = abs_j(span, spec.k_target * rho / 4.0)?;
        let s = span as i64;
        let weights: Vec<f64> = (-s..=s).map(|m| wj[m.unsigned_abs() as usize]).collect();
        let acc = Powers::new(PowerBase::Eta, -s, s, weights);
        let b = integral.integrate(&plan, Parts::All, tol, acc)?;
        for (i, pp) in (-(p as i64)..=p as i64).enumerate() {
            for (j, qq) in (-(q as i64)..=q as i64).enumerate() {
                entries[i * nq + j] = if toeplitz {
                    b.get(pp - qq)
                } else if qq % 2 == 0 {
                    b.get(pp + qq)
                } else {
                    -b.get(pp + qq)
                };
            }
        }
    } else {
        let jp = abs_j(p, spec.k_target * rho / 4.0)?;
        let jq = abs_j(q, spec.k_source * rho / 4.0)?;
        let wp: Vec<f64> = (-(p as i64)..=p as i64).map(|m| jp[m.unsigned_abs() as usize]).collect();
        let wq: Vec<f64> = (-(q as i64)..=q as i64).map(|m| jq[m.unsigned_abs() as usize]).collect();
        let acc = PowerMatrix::new(p, q, wp, wq);
        entries = integral.integrate(&plan, Parts::All, tol, acc)?.values;
    }
    Ok(M2LMatrix { source_center, target_center, k_target: spec.k_target, p, q, entries })
}

/// `L_p = Σ_q A_pq M_q`.
pub fn m2l_apply(a: &M2LMatrix, m: &MultipoleExpansion) -> Result<LocalExpansion> {
    if m.order != a.q {
        return Err(Error::Domain(format!("multipole order {} does not match matrix order {}", m.order, a.q)));
    }
    let mut out = LocalExpansion::zero(a.target_center, a.k_target, a.p);
    let nq = 2 * a.q + 1;
    for (i, l) in out.coeffs.iter_mut().enumerate() {
        let row = &a.entries[i * nq..(i + 1) * nq];
        *l = row.iter().zip(&m.coeffs).map(|(x, y)| x * y).sum();
    }
    Ok(out)
}

/// Free-space M2L by the Hankel addition theorem:
/// `L_p = (i/4) Σ_q M_q H_{q−p}(k|D|) e^{i(q−p) arg D}`, `D = c_t − c_s`.
pub fn m2l_free_space(m: &MultipoleExpansion, target_center: Point2, order: usize) -> Result<LocalExpansion> {
    let d = [target_center[0] - m.center[0], target_center[1] - m.center[1]];
    let (r, th) = polar(d);
    let span = order + m.order;
    if r == 0.0 {
        return Err(Error::Geometry("free-space M2L between coincident centres".into()));
    }
    let h = hankel1_seq(span, m.k0 * r)?;
    let s = span as i64;
    // H_n e^{inθ} for n ∈ [−s, s].
    let wave: Vec<Complex64> = (-s..=s)
        .map(|n| {
            let hn = h[n.unsigned_abs() as usize];
            let hn = if n < 0 && n % 2 != 0 { -hn } else { hn };
            hn * Complex64::from_polar(1.0, n as f64 * th)
        })
        .collect();
    let quarter_i = Complex64::new(0.0, 0.25);
    let mut out = LocalExpansion::zero(target_center, m.k0, order);
    let o = order as i64;
    for p in -o..=o {
        let mut acc = Complex64::new(0.0, 0.0);
        for qq in -(m.order as i64)..=m.order as i64 {
            acc += m.coeff(qq) * wave[(qq - p + s) as usize];
        }
        out.coeffs[(p + o) as usize] = quarter_i * acc;
    }
    Ok(out)
}

/// Identity of a translation matrix up to the relative geometry that
/// determines it. Centres are integers on a fine dyadic grid in the canonical
/// frame (`x`, target height `a`, source height `b`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct M2LKey {
    pub dx: i64,
    /// `a − b` when `k = k0`, else the pair `(a, b)`.
    pub rows: (i64, i64),
    pub p: usize,
    pub q: usize,
}

impl M2LKey {
    pub fn new(spec: &KernelSpec, target: [i64; 2], source: [i64; 2], p: usize, q: usize) -> Self {
        let rows = if spec.same_wavenumber() { (target[1] - source[1], 0) } else { (target[1], source[1]) };
        M2LKey { dx: target[0] - source[0], rows, p, q }
    }
}

/// Concurrent cache of translation matrices for one kernel and one tree
/// geometry. With a byte limit, matrices beyond the limit are built and used
/// but not stored.
#[derive(Debug, Default)]
pub struct M2LCache {
    map: DashMap<M2LKey, Arc<M2LMatrix>>,
    bytes: AtomicUsize,
    limit: Option<usize>,
}

impl M2LCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_limit_bytes(limit: usize) -> Self {
        M2LCache { limit: Some(limit), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes.load(Ordering::Relaxed)
    }

    /// Cached matrix for `key`, built by `make` on first use.
    pub fn get_or_try_insert<F>(&self, key: M2LKey, make: F) -> Result<Arc<M2LMatrix>>
    where
        F: FnOnce() -> Result<M2LMatrix>,
    {
        if let Some(v) = self.map.get(&key) {
            return Ok(v.clone());
        }
        let built = Arc::new(make()?);
        let size = built.entries.len() * std::mem::size_of::<Complex64>();
        if let Some(limit) = self.limit {
            if self.bytes() + size > limit {
                return Ok(built);
            }
        }
        let entry = self.map.entry(key).or_insert_with(|| {
            self.bytes.fetch_add(size, Ordering::Relaxed);
            built
        });
        Ok(entry.clone())
    }
}

/// Applies a matrix whose relative geometry matches, placing the result at
/// `target_center`.
pub fn m2l_apply_at(a: &M2LMatrix, m: &MultipoleExpansion, target_center: Point2) -> Result<LocalExpansion> {
    let mut l = m2l_apply(a, m)?;
    l.center = target_center;
    Ok(l)
}
