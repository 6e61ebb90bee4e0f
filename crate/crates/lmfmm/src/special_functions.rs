//! Integer-order Bessel and Hankel functions of real argument, and the
//! square-root branch `w(λ, k) = √(λ² − k²)` shared by all spectral integrands.
//!
//! `J_n` comes from Miller's backward recurrence normalised with
//! `J_0 + 2 Σ J_{2k} = 1`. `Y_0` and `Y_1` use Neumann series in the same
//! sequence for moderate arguments and the Hankel asymptotic expansion for
//! large ones; higher orders follow by forward recurrence.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ORDER: usize = 10_000;
const ASYMPTOTIC_Z: f64 = 25.0;
const RESCALE_AT: f64 = 1e250;

/// Branch rule for `w(λ, k) = √(λ² − k²)`.
///
/// Real `λ`: `w ≥ 0` for `|λ| ≥ k` and `w = −i√(k² − λ²)` for `|λ| < k`.
/// Complex `λ`: `√(λ − k)·√(λ + k)` with principal roots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SqrtBranch;

impl SqrtBranch {
    pub fn eval(self, lambda: Complex64, k: f64) -> Complex64 {
        w_sqrt(lambda, k)
    }
}

/// `√(λ² − k²)` on the branch described by [`SqrtBranch`].
pub fn w_sqrt(lambda: Complex64, k: f64) -> Complex64 {
    if lambda.im == 0.0 {
        let l = lambda.re;
        if l.abs() >= k {
            Complex64::new(((l - k) * (l + k)).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, -((k - l) * (k + l)).sqrt())
        }
    } else {
        (lambda - k).sqrt() * (lambda + k).sqrt()
    }
}

// Rough −log10 |J_m(z)| for m > z (Zhang & Jin).
fn envj(m: f64, z: f64) -> f64 {
    0.5 * (6.28 * m).log10() - m * (1.36 * z / m).log10()
}

fn miller_start(nmax: usize, z: f64) -> usize {
    let n = nmax as f64;
    let base = if n > z { envj(n.max(1.0), z).max(0.0) } else { 0.0 };
    let mut m = (n.max(z.ceil()) + 1.0).max(2.0);
    while envj(m, z) < base + 18.0 {
        m += 1.0;
    }
    m as usize + 8
}

/// Backward recurrence. Returns `J_0 … J_{m}` where `m ≥ nmax` is the
/// start order actually used.
fn miller(nmax: usize, z: f64) -> Result<Vec<f64>> {
    let m = miller_start(nmax, z);
    let mut f = vec![0.0; m + 2];
    f[m] = 1e-30;
    let mut norm = if m % 2 == 0 { 2.0 * f[m] } else { 0.0 };
    for j in (1..=m).rev() {
        let v = (2.0 * j as f64 / z) * f[j] - f[j + 1];
        f[j - 1] = v;
        if j - 1 > 0 && (j - 1) % 2 == 0 {
            norm += 2.0 * v;
        }
        if v.abs() > RESCALE_AT {
            let s = 1.0 / RESCALE_AT;
            for x in f[j - 1..].iter_mut() {
                *x *= s;
            }
            norm *= s;
        }
    }
    norm += f[0];
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Overflow {
            what: "Bessel J recurrence",
            order: nmax as i64,
            z,
        });
    }
    let inv = 1.0 / norm;
    f.truncate(m + 1);
    for x in f.iter_mut() {
        *x *= inv;
    }
    Ok(f)
}

/// `J_0(z), …, J_nmax(z)` for `z ≥ 0`.
pub fn bessel_j_seq(nmax: usize, z: f64) -> Result<Vec<f64>> {
    check_order(nmax)?;
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("Bessel J requires finite z >= 0, got {z}")));
    }
    if z == 0.0 {
        let mut out = vec![0.0; nmax + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    let mut f = miller(nmax, z)?;
    f.truncate(nmax + 1);
    Ok(f)
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::OutOfRange(format!("order {n} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

/// `J_p(z)` for integer `p`, `z ≥ 0`.
pub fn bessel_j(p: i64, z: f64) -> Result<f64> {
    let n = p.unsigned_abs() as usize;
    let v = bessel_j_seq(n, z)?[n];
    Ok(if p < 0 && n % 2 == 1 { -v } else { v })
}

/// One-term large-order approximation `(1/√(2πν))·(e z / 2ν)^ν`.
pub fn bessel_j_asymptotic(p: i64, z: f64) -> f64 {
    if p < 1 || z <= 0.0 {
        return 0.0;
    }
    let nu = p as f64;
    let log = -0.5 * (2.0 * PI * nu).ln() + nu * (std::f64::consts::E * z / (2.0 * nu)).ln();
    log.exp()
}

// Hankel asymptotic series: returns (P, Q) for order nu.
fn hankel_pq(nu: f64, z: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kk = k as f64;
        term *= (mu - (2.0 * kk - 1.0).powi(2)) / (kk * 8.0 * z);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        let s = match k % 4 {
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            3 => (0.0, -1.0),
            _ => (1.0, 0.0),
        };
        p += s.0 * term;
        q += s.1 * term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

fn y01(z: f64) -> Result<(f64, f64)> {
    if z > ASYMPTOTIC_Z {
        let amp = (2.0 / (PI * z)).sqrt();
        let (p0, q0) = hankel_pq(0.0, z);
        let (p1, q1) = hankel_pq(1.0, z);
        let c0 = z - 0.25 * PI;
        let c1 = z - 0.75 * PI;
        let y0 = amp * (p0 * c0.sin() + q0 * c0.cos());
        let y1 = amp * (p1 * c1.sin() + q1 * c1.cos());
        return Ok((y0, y1));
    }
    let j = miller(1, z)?;
    let e = (0.5 * z).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let kf = k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / kf;
        if 2 * k + 1 < j.len() {
            s1 += sign * (2.0 * kf + 1.0) / (kf * (kf + 1.0)) * j[2 * k + 1];
        }
        k += 1;
    }
    let y0 = 2.0 / PI * e * j[0] - 4.0 / PI * s0;
    let y1 = 2.0 / PI * ((e - 1.0) * j[1] - j[0] / z - s1);
    Ok((y0, y1))
}

/// `Y_0(z), …, Y_nmax(z)` for `z > 0`.
pub fn bessel_y_seq(nmax: usize, z: f64) -> Result<Vec<f64>> {
    check_order(nmax)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("Bessel Y requires finite z > 0, got {z}")));
    }
    let (y0, y1) = y01(z)?;
    let mut y = Vec::with_capacity(nmax + 1);
    y.push(y0);
    if nmax >= 1 {
        y.push(y1);
    }
    for n in 1..nmax {
        let v = (2.0 * n as f64 / z) * y[n] - y[n - 1];
        if !v.is_finite() || v.abs() > 1e300 {
            return Err(Error::Overflow {
                what: "Bessel Y recurrence",
                order: (n + 1) as i64,
                z,
            });
        }
        y.push(v);
    }
    Ok(y)
}

/// `H^{(1)}_0(z), …, H^{(1)}_nmax(z)` for `z > 0`.
pub fn hankel1_seq(nmax: usize, z: f64) -> Result<Vec<Complex64>> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("Hankel function requires finite z > 0, got {z}")));
    }
    let j = bessel_j_seq(nmax, z)?;
    let y = bessel_y_seq(nmax, z)?;
    Ok(j.iter().zip(&y).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

/// `H^{(1)}_p(z)` for integer `p`, `z > 0`.
pub fn hankel1(p: i64, z: f64) -> Result<Complex64> {
    let n = p.unsigned_abs() as usize;
    let v = hankel1_seq(n, z)?[n];
    Ok(if p < 0 && n % 2 == 1 { -v } else { v })
}
