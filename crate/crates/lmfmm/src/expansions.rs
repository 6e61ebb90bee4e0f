//! Multipole and local expansions.
//!
//! A source box centred at `c_s` is summarised by
//! `M_p = Σ_j q_j J_p(k0 r_j) e^{−ipθ_j}`, exactly the free-space Helmholtz
//! coefficients. The layered kernel enters only through the basis
//!
//! `Φ_p(x) = ∫ e^{iλ(x − x_c)} e^{−w_k a(y)} e^{w_{k0} b(y_c)} ζ^p σ/(4π w_k) dλ`,
//!
//! with `ζ = −i(λ − s w_{k0})/k0`. Then `Σ_p M_p ζ^p` is the Laurent series of
//! `Σ_j q_j e^{s w_{k0}(y_j − y_c)} e^{−iλ(x_j − x_c)}`.
//!
//! Local expansions use `J_p(k r) e^{ipθ}` about the target centre with
//! `η = i(λ + τ w_k)/k` playing the same role for the target factor.

use crate::error::{Error, Result};
use crate::greens::KernelSpec;
use crate::sommerfeld::{default_plan, Geometry, Integral, Parts, PowerBase, Powers};
use crate::special_functions::bessel_j_seq;
use num_complex::Complex64;

pub type Point2 = [f64; 2];

/// Default relative tolerance for basis-function integrals.
pub const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleExpansion {
    pub center: Point2,
    pub k0: f64,
    pub order: usize,
    /// `M_p` at index `p + order`.
    pub coeffs: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalExpansion {
    pub center: Point2,
    pub k: f64,
    pub order: usize,
    /// `L_p` at index `p + order`.
    pub coeffs: Vec<Complex64>,
}

macro_rules! coeff_access {
    ($t:ty) => {
        impl $t {
            pub fn coeff(&self, p: i64) -> Complex64 {
                if p.unsigned_abs() as usize > self.order {
                    return Complex64::new(0.0, 0.0);
                }
                self.coeffs[(p + self.order as i64) as usize]
            }

            pub fn add_assign(&mut self, other: &Self) {
                assert_eq!(self.order, other.order);
                for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
                    *a += b;
                }
            }
        }
    };
}
coeff_access!(MultipoleExpansion);
coeff_access!(LocalExpansion);

impl MultipoleExpansion {
    pub fn zero(center: Point2, k0: f64, order: usize) -> Self {
        MultipoleExpansion { center, k0, order, coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1] }
    }

    /// `Σ_p M_p Φ_p(x)`, for validation.
    pub fn evaluate(&self, spec: &KernelSpec, x: Point2) -> Result<Complex64> {
        let phi = phi_basis_range(self.order, x, spec, self.center)?;
        Ok(self.coeffs.iter().zip(&phi).map(|(m, f)| m * f).sum())
    }
}

impl LocalExpansion {
    pub fn zero(center: Point2, k: f64, order: usize) -> Self {
        LocalExpansion { center, k, order, coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1] }
    }
}

/// `J_p(z) e^{i s p θ}` for `|p| ≤ order` at index `p + order`.
pub fn bessel_waves(order: usize, z: f64, theta: f64, sign: f64) -> Result<Vec<Complex64>> {
    let j = bessel_j_seq(order, z)?;
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * order + 1];
    for p in 0..=order {
        let e = Complex64::from_polar(1.0, sign * p as f64 * theta);
        out[order + p] = j[p] * e;
        // J_{−p} = (−1)^p J_p.
        let jm = if p % 2 == 1 { -j[p] } else { j[p] };
        out[order - p] = jm * e.conj();
    }
    Ok(out)
}

fn polar(v: Point2, c: Point2) -> (f64, f64) {
    let dx = v[0] - c[0];
    let dy = v[1] - c[1];
    (dx.hypot(dy), dy.atan2(dx))
}

/// Source-to-multipole: `M_p = Σ_j q_j J_p(k0 r_j) e^{−ipθ_j}`.
pub fn s2m(particles: &[(Point2, Complex64)], center: Point2, k0: f64, order: usize) -> Result<MultipoleExpansion> {
    let mut m = MultipoleExpansion::zero(center, k0, order);
    for &(x, q) in particles {
        let (r, th) = polar(x, center);
        let w = bessel_waves(order, k0 * r, th, -1.0)?;
        for (c, b) in m.coeffs.iter_mut().zip(&w) {
            *c += q * b;
        }
    }
    Ok(m)
}

/// Local-to-target: `Σ_p L_p J_p(k r̃) e^{ipθ̃}`.
pub fn l2t(local: &LocalExpansion, x: Point2) -> Result<Complex64> {
    let (r, th) = polar(x, local.center);
    let w = bessel_waves(local.order, local.k * r, th, 1.0)?;
    Ok(local.coeffs.iter().zip(&w).map(|(l, b)| l * b).sum())
}

/// Propagating (`|λ| < K`) and evanescent (`|λ| > K`) parts of a basis value.
#[derive(Debug, Clone, Copy)]
pub struct BasisParts {
    pub propagating: Complex64,
    pub evanescent: Complex64,
}

impl BasisParts {
    pub fn total(&self) -> Complex64 {
        self.propagating + self.evanescent
    }
}

fn basis_part(spec: &KernelSpec, geom: Geometry, base: PowerBase, p: i64, parts: Parts, tol: f64) -> Result<Complex64> {
    let plan = default_plan(spec, &geom)?;
    let acc = Powers::new(base, p, p, vec![1.0]);
    Ok(Integral::new(spec, geom).integrate(&plan, parts, tol, acc)?.get(p))
}

fn far_geometry(spec: &KernelSpec, target: Point2, source: Point2) -> Result<Geometry> {
    let g = Geometry::new(spec, target, source);
    if !(g.y() >= 0.0) || g.rho() == 0.0 {
        return Err(Error::Geometry(format!(
            "basis needs a positive modified separation, got X = {}, Y = {}",
            g.x,
            g.y()
        )));
    }
    Ok(g)
}

/// Multipole basis `Φ_p` at target `x` for a source box centred at `center`.
pub fn phi_basis(p: i64, x: Point2, spec: &KernelSpec, center: Point2) -> Result<Complex64> {
    let g = far_geometry(spec, x, center)?;
    basis_part(spec, g, PowerBase::Zeta, p, Parts::All, BASIS_TOL)
}

pub fn phi_basis_parts(p: i64, x: Point2, spec: &KernelSpec, center: Point2) -> Result<BasisParts> {
    let g = far_geometry(spec, x, center)?;
    Ok(BasisParts {
        propagating: basis_part(spec, g, PowerBase::Zeta, p, Parts::Propagating, BASIS_TOL)?,
        evanescent: basis_part(spec, g, PowerBase::Zeta, p, Parts::Evanescent, BASIS_TOL)?,
    })
}

/// `Φ_p` for `|p| ≤ order` at index `p + order`.
pub fn phi_basis_range(order: usize, x: Point2, spec: &KernelSpec, center: Point2) -> Result<Vec<Complex64>> {
    let g = far_geometry(spec, x, center)?;
    let plan = default_plan(spec, &g)?;
    let o = order as i64;
    let acc = Powers::new(PowerBase::Zeta, -o, o, vec![1.0; 2 * order + 1]);
    Ok(Integral::new(spec, g).integrate(&plan, Parts::All, BASIS_TOL, acc)?.values)
}

/// Local basis `Ψ_p` at source `x0` for a target box centred at `center`.
pub fn psi_basis(p: i64, x0: Point2, spec: &KernelSpec, center: Point2) -> Result<Complex64> {
    let g = far_geometry(spec, center, x0)?;
    basis_part(spec, g, PowerBase::Eta, p, Parts::All, BASIS_TOL)
}

pub fn psi_basis_parts(p: i64, x0: Point2, spec: &KernelSpec, center: Point2) -> Result<BasisParts> {
    let g = far_geometry(spec, center, x0)?;
    Ok(BasisParts {
        propagating: basis_part(spec, g, PowerBase::Eta, p, Parts::Propagating, BASIS_TOL)?,
        evanescent: basis_part(spec, g, PowerBase::Eta, p, Parts::Evanescent, BASIS_TOL)?,
    })
}

/// Evanescent part of `Ψ_p` alone. Usable when σ has real-axis poles in
/// `|λ| < K`.
pub fn psi_basis_evanescent(p: i64, x0: Point2, spec: &KernelSpec, center: Point2) -> Result<Complex64> {
    let g = far_geometry(spec, center, x0)?;
    basis_part(spec, g, PowerBase::Eta, p, Parts::Evanescent, BASIS_TOL)
}

pub fn phi_basis_evanescent(p: i64, x: Point2, spec: &KernelSpec, center: Point2) -> Result<Complex64> {
    let g = far_geometry(spec, x, center)?;
    basis_part(spec, g, PowerBase::Zeta, p, Parts::Evanescent, BASIS_TOL)
}

/// Local expansion about `center` generated directly by point sources.
pub fn s2l(particles: &[(Point2, Complex64)], spec: &KernelSpec, center: Point2, order: usize) -> Result<LocalExpansion> {
    let mut l = LocalExpansion::zero(center, spec.k_target, order);
    for &(x0, q) in particles {
        let g = far_geometry(spec, center, x0)?;
        let plan = default_plan(spec, &g)?;
        let o = order as i64;
        let acc = Powers::new(PowerBase::Eta, -o, o, vec![1.0; 2 * order + 1]);
        let psi = Integral::new(spec, g).integrate(&plan, Parts::All, BASIS_TOL, acc)?;
        for (c, v) in l.coeffs.iter_mut().zip(&psi.values) {
            *c += q * v;
        }
    }
    Ok(l)
}

/// Separation governing expansion convergence, measured in the canonical
/// frame: `√((a − b)² + Δx²)` with target height `a = τy + d` and source
/// height `b = s y0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedDistance {
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionRole {
    /// `a` is the target, `b` the source-box centre.
    Multipole,
    /// `a` is the target-box centre, `b` the source.
    Local,
}

/// Both roles put the target first in the canonical frame, so they share one
/// formula.
pub fn modified_distance(spec: &KernelSpec, a: Point2, b: Point2, _role: ExpansionRole) -> ModifiedDistance {
    ModifiedDistance { rho: Geometry::new(spec, a, b).rho() }
}

/// Truncation order for a box of radius `r` at modified distance `rho`.
pub fn estimate_order(r: f64, rho: ModifiedDistance, eps: f64, k_pair: f64) -> Result<usize> {
    let rho = rho.rho;
    if !(r < rho) {
        return Err(Error::ExpansionInvalid { r, rho });
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {eps}")));
    }
    let q = r / rho;
    let mut p0 = 0usize;
    if q > 0.0 {
        // q^{P+1}/(1−q) ≤ eps.
        let need = (eps * (1.0 - q)).ln() / q.ln() - 1.0;
        p0 = need.max(0.0).ceil() as usize;
        while p0 > 0 && q.powi(p0 as i32) / (1.0 - q) <= eps {
            p0 -= 1;
        }
        while q.powi(p0 as i32 + 1) / (1.0 - q) > eps {
            p0 += 1;
        }
    }
    let wave = (std::f64::consts::E * k_pair * r / 2.0).ceil() as usize;
    Ok(p0.max(wave).max(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{make_dirichlet_scattered, make_free_space};

    #[test]
    fn order_examples() {
        let d = |rho| ModifiedDistance { rho };
        assert_eq!(estimate_order(0.416, d(1.0), 1e-6, 0.0).unwrap(), 16);
        assert_eq!(estimate_order(0.5, d(1.0), 1e-3, 0.0).unwrap(), 10);
        assert_eq!(estimate_order(0.5, d(1.0), 1.0, 0.0).unwrap(), 4);
        assert!(estimate_order(1.0, d(1.0), 1e-3, 0.0).is_err());
        assert_eq!(estimate_order(0.5, d(1.0), 1e-3, 40.0).unwrap(), 28);
    }

    #[test]
    fn single_charge_at_center() {
        let m = s2m(&[([1.0, 2.0], Complex64::new(1.0, 0.0))], [1.0, 2.0], 1.3, 6).unwrap();
        for p in -6..=6 {
            let e = if p == 0 { 1.0 } else { 0.0 };
            assert!((m.coeff(p) - e).norm() < 1e-15);
        }
        let q = Complex64::new(0.3, -2.0);
        let m = s2m(&[([1.2, 2.1], q), ([1.2, 2.1], -q)], [1.0, 2.0], 1.3, 6).unwrap();
        assert!(m.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn image_distance() {
        let spec = make_dirichlet_scattered(1.0);
        let d = modified_distance(&spec, [0.0, 1.0], [0.0, 0.5], ExpansionRole::Multipole);
        assert!((d.rho - 1.5).abs() < 1e-15);
        let f = make_free_space(1.0);
        let d = modified_distance(&f, [3.0, 1.0], [0.0, -3.0], ExpansionRole::Local);
        assert!((d.rho - 5.0).abs() < 1e-15);
    }

    #[test]
    fn l2t_at_center() {
        let mut l = LocalExpansion::zero([0.5, 0.5], 1.0, 3);
        l.coeffs[3] = Complex64::new(1.0, 0.0);
        assert!((l2t(&l, [0.5, 0.5]).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn phi_zero_is_kernel() {
        let spec = make_free_space(1.0);
        let v = phi_basis(0, [0.3, 2.0], &spec, [0.0, 0.0]).unwrap();
        let e = crate::greens::reference_value(&spec, [0.3, 2.0], [0.0, 0.0]).unwrap();
        assert!((v - e).norm() < 1e-10 * e.norm());
    }
}
