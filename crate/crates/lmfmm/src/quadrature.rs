//! Gauss-Legendre and Gauss-Laguerre rules.
//!
//! Legendre nodes come from Newton iteration on the three-term recurrence.
//! Laguerre nodes start from the eigenvalues of the Jacobi matrix and are
//! polished by Newton; weights are carried in log form as well because they
//! underflow for large `n`.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

pub const MAX_LEGENDRE: usize = 4096;
pub const MAX_LAGUERRE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Legendre,
    Laguerre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Natural logarithms of the weights; finite even where `weights` underflow.
    pub log_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss-Legendre rule on `[−1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_LEGENDRE {
        return Err(Error::OutOfRange(format!("Gauss-Legendre size {n} not in 1..={MAX_LEGENDRE}")));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    if n == 1 {
        weights[0] = 2.0;
    } else {
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_eval(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1e-3) {
                    break;
                }
            }
            let (_, dp) = legendre_eval(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
    }
    let log_weights = weights.iter().map(|w| w.ln()).collect();
    Ok(QuadratureRule { kind: RuleKind::Legendre, nodes, weights, log_weights })
}

// Eigenvalues of a symmetric tridiagonal matrix by implicit QL.
fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

// Laguerre recurrence with running rescaling. Returns (L_n, L_{n-1}, ln scale)
// with the true values being the returned ones times exp(scale).
fn laguerre_eval(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 1.0 - x;
    let mut scale = 0.0;
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0 - x) * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
        let m = p1.abs().max(p0.abs());
        if m > 1e100 {
            p0 /= m;
            p1 /= m;
            scale += m.ln();
        }
    }
    (p1, p0, scale)
}

// ln Σ_{j<n} L_j(x)². The Laguerre polynomials are orthonormal for e^{−x},
// so the reciprocal of this sum is the Gauss weight at a node.
fn log_christoffel_sum(n: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    let mut p1 = 1.0 - x;
    let mut sum = 1.0;
    let mut scale = 0.0;
    if n > 1 {
        sum += p1 * p1;
    }
    for j in 1..n.saturating_sub(1) {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0 - x) * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
        sum += p1 * p1;
        let m = p1.abs().max(p0.abs());
        if m > 1e100 {
            p0 /= m;
            p1 /= m;
            sum /= m * m;
            scale += m.ln();
        }
    }
    sum.ln() + 2.0 * scale
}

/// `n`-point Gauss-Laguerre rule for weight `e^{−t}` on `[0, ∞)`.
pub fn gauss_laguerre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_LAGUERRE {
        return Err(Error::OutOfRange(format!("Gauss-Laguerre size {n} not in 1..={MAX_LAGUERRE}")));
    }
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|i| i as f64).collect();
    let mut nodes = if n == 1 { vec![1.0] } else { tridiagonal_eigenvalues(&diag, &off) };
    let nf = n as f64;
    let mut log_weights = vec![0.0; n];
    for (i, x) in nodes.iter_mut().enumerate() {
        for _ in 0..50 {
            let (p, q, _) = laguerre_eval(n, *x);
            // L_n' = n (L_n − L_{n−1}) / x
            let dp = nf * (p - q) / *x;
            let dx = p / dp;
            *x -= dx;
            if dx.abs() <= 4.0 * f64::EPSILON * x.abs() {
                break;
            }
        }
        log_weights[i] = -log_christoffel_sum(n, *x);
    }
    let weights = log_weights.iter().map(|l| l.exp()).collect();
    Ok(QuadratureRule { kind: RuleKind::Laguerre, nodes, weights, log_weights })
}

/// Affine map of a Legendre rule onto `[a, b]`.
pub fn map_to_interval(rule: &QuadratureRule, a: f64, b: f64) -> Result<QuadratureRule> {
    if rule.kind != RuleKind::Legendre {
        return Err(Error::Domain("only Legendre rules map to finite intervals".into()));
    }
    if !(a < b) {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    Ok(QuadratureRule {
        kind: RuleKind::Legendre,
        nodes: rule.nodes.iter().map(|x| m + h * x).collect(),
        weights: rule.weights.iter().map(|w| h * w).collect(),
        log_weights: rule.log_weights.iter().map(|w| w + h.ln()).collect(),
    })
}

/// Rescale a Laguerre rule to the weight `e^{−s t}`.
pub fn scale_laguerre(rule: &QuadratureRule, s: f64) -> Result<QuadratureRule> {
    if rule.kind != RuleKind::Laguerre {
        return Err(Error::Domain("scale_laguerre needs a Laguerre rule".into()));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Laguerre rate must be positive, got {s}")));
    }
    Ok(QuadratureRule {
        kind: RuleKind::Laguerre,
        nodes: rule.nodes.iter().map(|x| x / s).collect(),
        weights: rule.weights.iter().map(|w| w / s).collect(),
        log_weights: rule.log_weights.iter().map(|w| w - s.ln()).collect(),
    })
}

type Cache = RwLock<HashMap<(RuleKind, usize), Arc<QuadratureRule>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Shared, memoised rule of the given kind and size.
pub fn cached(kind: RuleKind, n: usize) -> Result<Arc<QuadratureRule>> {
    if let Some(r) = cache().read().unwrap().get(&(kind, n)) {
        return Ok(r.clone());
    }
    let rule = Arc::new(match kind {
        RuleKind::Legendre => gauss_legendre(n)?,
        RuleKind::Laguerre => gauss_laguerre(n)?,
    });
    Ok(cache().write().unwrap().entry((kind, n)).or_insert(rule).clone())
}
