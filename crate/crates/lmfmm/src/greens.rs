//! Layered-media kernels in one canonical Sommerfeld form
//!
//! ```text
//! G(x, x0) = ∫ e^{iλ(x−x0)} e^{−w_k (τ y + d)} e^{s · w_{k0} y0} σ(λ) / (4π w_k) dλ
//! ```
//!
//! with `w_κ = √(λ² − κ²)`. `τ = +1` is the usual decaying target term and
//! `τ = −1` encodes a target term `e^{+w_k y}` (targets below an interface).
//! `s` is the sign on the source exponent. The integral converges when the
//! effective height `Y = τ y + d − s y0` is positive.

use crate::error::{Error, Result};
use crate::special_functions::{hankel1, w_sqrt};
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A point of the spectral contour.
///
/// On the real axis `w` follows [`w_sqrt`]. On the tail parametrisation
/// `λ = ±√(t² + K²)`, `w_κ = √(t² + K² − κ²)` with principal roots, which is
/// the analytic continuation of the real-axis branch into `Re t > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralPoint {
    Real(f64),
    /// Real `λ` inside `[lo, hi]` with the endpoint distances `λ − lo` and
    /// `hi − λ` carried separately, so radicals vanishing at an endpoint keep
    /// full relative accuracy.
    Piece { lambda: f64, lo: f64, hi: f64, d_lo: f64, d_hi: f64 },
    Tail { t: Complex64, kref: f64, negative: bool },
    Complex(Complex64),
}

impl SpectralPoint {
    pub fn lambda(&self) -> Complex64 {
        match *self {
            SpectralPoint::Real(l) | SpectralPoint::Piece { lambda: l, .. } => Complex64::new(l, 0.0),
            SpectralPoint::Tail { t, kref, negative } => {
                let l = (t * t + kref * kref).sqrt();
                if negative {
                    -l
                } else {
                    l
                }
            }
            SpectralPoint::Complex(l) => l,
        }
    }

    /// `λ²`, exact on the tail parametrisation.
    pub fn lambda_sq(&self) -> Complex64 {
        match *self {
            SpectralPoint::Tail { t, kref, .. } => t * t + kref * kref,
            _ => {
                let l = self.lambda();
                l * l
            }
        }
    }

    pub fn w(&self, k: f64) -> Complex64 {
        match *self {
            SpectralPoint::Real(l) => w_sqrt(Complex64::new(l, 0.0), k),
            SpectralPoint::Piece { lambda, lo, hi, d_lo, d_hi } => {
                // λ − κ and λ + κ, exact when ±κ is an endpoint.
                let diff = |c: f64| {
                    if c == lo {
                        d_lo
                    } else if c == hi {
                        -d_hi
                    } else {
                        lambda - c
                    }
                };
                let prod = diff(k) * diff(-k);
                if prod >= 0.0 {
                    Complex64::new(prod.sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, -(-prod).sqrt())
                }
            }
            SpectralPoint::Tail { t, kref, .. } => {
                if k == kref {
                    t
                } else {
                    (t * t + (kref - k) * (kref + k)).sqrt()
                }
            }
            SpectralPoint::Complex(l) => w_sqrt(l, k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLayerParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub d: f64,
}

impl ThreeLayerParams {
    pub fn new(k1: f64, k2: f64, k3: f64, d: f64) -> Result<Self> {
        let ok = [k1, k2, k3, d].iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::Domain(format!(
                "three-layer parameters must be positive: k = ({k1}, {k2}, {k3}), d = {d}"
            )));
        }
        Ok(Self { k1, k2, k3, d })
    }

    /// Lossless slab with a core faster than both claddings carries guided
    /// modes, i.e. real poles of every σ in `(max(k1, k3), k2)`.
    pub fn has_guided_modes(&self) -> bool {
        self.k2 > self.k1.max(self.k3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThreeLayerComponent {
    S1,
    S2t,
    S2b,
    S3,
}

impl std::str::FromStr for ThreeLayerComponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" => Ok(Self::S1),
            "s2t" => Ok(Self::S2t),
            "s2b" => Ok(Self::S2b),
            "s3" => Ok(Self::S3),
            other => Err(Error::Domain(format!("unknown three-layer component '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    FreeSpace,
    DirichletScattered,
    ImpedanceScattered,
    ThreeLayer(ThreeLayerComponent),
}

/// The image term σ(λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaFunction {
    Constant(Complex64),
    Impedance { k: f64, alpha: f64 },
    ThreeLayer { params: ThreeLayerParams, component: ThreeLayerComponent },
}

impl SigmaFunction {
    pub fn eval(&self, p: &SpectralPoint) -> Result<Complex64> {
        match *self {
            SigmaFunction::Constant(c) => Ok(c),
            SigmaFunction::Impedance { k, alpha } => {
                let w = p.w(k);
                let ika = I * (k * alpha);
                let den = w - ika;
                if den.norm() < 1e-12 * (k + w.norm()) {
                    return Err(Error::PoleNearPath { lambda: p.lambda() });
                }
                Ok((w + ika) / den)
            }
            SigmaFunction::ThreeLayer { params, component } => {
                let s = three_layer_closed_at(p, &params)?;
                Ok(match component {
                    ThreeLayerComponent::S1 => s[0],
                    ThreeLayerComponent::S2t => s[1],
                    ThreeLayerComponent::S2b => s[2],
                    ThreeLayerComponent::S3 => s[3],
                })
            }
        }
    }

    pub fn eval_real(&self, lambda: f64) -> Result<Complex64> {
        self.eval(&SpectralPoint::Real(lambda))
    }

    /// Limit of σ as `λ → ±∞`.
    pub fn sigma_inf(&self) -> Complex64 {
        match *self {
            SigmaFunction::Constant(c) => c,
            SigmaFunction::Impedance { .. } => Complex64::new(1.0, 0.0),
            SigmaFunction::ThreeLayer { component, .. } => match component {
                ThreeLayerComponent::S1 | ThreeLayerComponent::S2b => Complex64::new(0.0, 0.0),
                ThreeLayerComponent::S2t | ThreeLayerComponent::S3 => Complex64::new(1.0, 0.0),
            },
        }
    }

    /// Wavenumbers at which σ has square-root branch points.
    pub fn branch_wavenumbers(&self) -> Vec<f64> {
        match *self {
            SigmaFunction::Constant(_) => vec![],
            SigmaFunction::Impedance { k, .. } => vec![k],
            SigmaFunction::ThreeLayer { params, .. } => vec![params.k1, params.k2, params.k3],
        }
    }

    /// Distance from `t = 0` to the nearest pole in the tail variable, when known.
    pub fn pole_distance(&self) -> Option<f64> {
        match *self {
            SigmaFunction::Impedance { k, alpha } if alpha != 0.0 => Some(k * alpha.abs()),
            _ => None,
        }
    }

    pub fn has_real_axis_poles(&self) -> bool {
        match *self {
            SigmaFunction::ThreeLayer { params, .. } => params.has_guided_modes(),
            _ => false,
        }
    }
}

/// One kernel in canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub k_target: f64,
    pub k_source: f64,
    pub offset_d: f64,
    /// Sign `s` on the source exponent `e^{s w_{k0} y0}`.
    pub sign: i8,
    /// Orientation `τ` of the target exponent `e^{−w_k (τ y + d)}`.
    pub orientation: i8,
    pub sigma: SigmaFunction,
    pub family: Family,
}

impl KernelSpec {
    /// `τ y + d`, the coefficient of `−w_k` in the exponent.
    pub fn target_height(&self, y: f64) -> f64 {
        self.orientation as f64 * y + self.offset_d
    }

    /// `s y0`, the coefficient of `+w_{k0}` in the exponent.
    pub fn source_height(&self, y0: f64) -> f64 {
        self.sign as f64 * y0
    }

    /// Effective vertical separation `Y = τ y + d − s y0`.
    pub fn effective_y(&self, y: f64, y0: f64) -> f64 {
        self.target_height(y) - self.source_height(y0)
    }

    /// Sorted, de-duplicated wavenumbers where the integrand has branch points.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let mut v = vec![self.k_target, self.k_source];
        v.extend(self.sigma.branch_wavenumbers());
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        v
    }

    pub fn k_max(&self) -> f64 {
        *self.wavenumbers().last().unwrap()
    }

    /// True when the source and target layers share the wavenumber.
    pub fn same_wavenumber(&self) -> bool {
        self.k_target == self.k_source
    }

    /// Checks that a target lies in the layer this kernel describes.
    pub fn check_target(&self, y: f64) -> Result<()> {
        let ok = match self.family {
            Family::FreeSpace => true,
            Family::DirichletScattered | Family::ImpedanceScattered => y >= 0.0,
            Family::ThreeLayer(c) => {
                let d = match self.sigma {
                    SigmaFunction::ThreeLayer { params, .. } => params.d,
                    _ => unreachable!(),
                };
                match c {
                    ThreeLayerComponent::S1 => y >= 0.0,
                    ThreeLayerComponent::S2t | ThreeLayerComponent::S2b => (-d..=0.0).contains(&y),
                    ThreeLayerComponent::S3 => y <= -d,
                }
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("target height {y} outside the target layer of {:?}", self.family)))
        }
    }

    pub fn check_source(&self, y0: f64) -> Result<()> {
        let ok = match self.family {
            Family::FreeSpace => true,
            _ => y0 >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("source height {y0} outside the source layer of {:?}", self.family)))
        }
    }

    /// Layer checks plus `Y ≥ 0` and a nonzero displacement.
    pub fn check_pair(&self, x: [f64; 2], x0: [f64; 2]) -> Result<()> {
        self.check_target(x[1])?;
        self.check_source(x0[1])?;
        let yy = self.effective_y(x[1], x0[1]);
        if self.family == Family::FreeSpace {
            if x == x0 {
                return Err(Error::Geometry("coincident source and target".into()));
            }
            return Ok(());
        }
        if yy < 0.0 || (yy == 0.0 && x[0] == x0[0]) {
            return Err(Error::Geometry(format!(
                "effective height {yy} must be positive (target {x:?}, source {x0:?})"
            )));
        }
        Ok(())
    }
}

pub fn make_free_space(k: f64) -> KernelSpec {
    KernelSpec {
        k_target: k,
        k_source: k,
        offset_d: 0.0,
        sign: 1,
        orientation: 1,
        sigma: SigmaFunction::Constant(Complex64::new(1.0, 0.0)),
        family: Family::FreeSpace,
    }
}

pub fn make_dirichlet_scattered(k: f64) -> KernelSpec {
    KernelSpec {
        sign: -1,
        sigma: SigmaFunction::Constant(Complex64::new(-1.0, 0.0)),
        family: Family::DirichletScattered,
        ..make_free_space(k)
    }
}

/// Half-space with `∂u/∂y − iαu = 0` on `y = 0`.
///
/// For `−1 < α < 0` the image term has a surface-wave pole on the real axis,
/// which this library does not deform around.
pub fn make_impedance_scattered(k: f64, alpha: f64) -> Result<KernelSpec> {
    if !alpha.is_finite() || (alpha < 0.0 && alpha > -1.0) {
        return Err(Error::Unsupported(format!(
            "impedance alpha = {alpha} puts a pole of the image term on the real axis"
        )));
    }
    let sigma = if alpha == 0.0 {
        SigmaFunction::Constant(Complex64::new(1.0, 0.0))
    } else {
        SigmaFunction::Impedance { k, alpha }
    };
    Ok(KernelSpec {
        sign: -1,
        sigma,
        family: Family::ImpedanceScattered,
        ..make_free_space(k)
    })
}

/// Scattered field of a source in the top layer of a three-layer medium with
/// interfaces at `y = 0` and `y = −d`.
pub fn make_three_layer(params: ThreeLayerParams, component: ThreeLayerComponent) -> KernelSpec {
    let (k_target, offset_d, orientation) = match component {
        ThreeLayerComponent::S1 => (params.k1, 0.0, 1),
        ThreeLayerComponent::S2t => (params.k2, 0.0, -1),
        ThreeLayerComponent::S2b => (params.k2, 2.0 * params.d, 1),
        ThreeLayerComponent::S3 => (params.k3, 0.0, -1),
    };
    KernelSpec {
        k_target,
        k_source: params.k1,
        offset_d,
        sign: -1,
        orientation,
        sigma: SigmaFunction::ThreeLayer { params, component },
        family: Family::ThreeLayer(component),
    }
}

fn three_layer_closed_at(p: &SpectralPoint, params: &ThreeLayerParams) -> Result<[Complex64; 4]> {
    let w1 = p.w(params.k1);
    let w2 = p.w(params.k2);
    let w3 = p.w(params.k3);
    let d = params.d;
    // Everything is divided by e^{d w2}/2 so that no exponential grows.
    let e2 = (-d * w2).exp();
    let e22 = e2 * e2;
    let one = Complex64::new(1.0, 0.0);
    let w22 = w2 * w2;
    let den = (one - e22) * (w22 + w1 * w3) + (one + e22) * w2 * (w1 + w3);
    let scale = (w22.norm() + (w1 * w3).norm() + (w2 * (w1 + w3)).norm()).max(f64::MIN_POSITIVE);
    if den.norm() < 1e-12 * scale {
        return Err(Error::Singular { lambda: p.lambda() });
    }
    let s1 = ((one - e22) * (w1 * w3 - w22) + (one + e22) * w2 * (w1 - w3)) / den;
    let s2t = 2.0 * w2 * (w2 + w3) / den;
    let s2b = 2.0 * w2 * (w2 - w3) / den;
    let s3 = 4.0 * w2 * w3 * (d * (w3 - w2)).exp() / den;
    Ok([s1, s2t, s2b, s3])
}

/// The displayed closed-form solution `(σ1, σ2ᵗ, σ2ᵇ, σ3)` at real `λ`.
pub fn sigma_three_layer_closed(lambda: f64, params: &ThreeLayerParams) -> Result<[Complex64; 4]> {
    three_layer_closed_at(&SpectralPoint::Real(lambda), params)
}

/// The interface system for `(σ1, σ2ᵗ, σ2ᵇ, σ3)`.
///
/// The unknowns for the two transmitted densities are rescaled by `e^{−d w2}`
/// and `e^{−d w3}` so that the solution is in the same normalisation as
/// [`sigma_three_layer_closed`]; rows are multiplied by `w2` and `w3` to clear
/// the radicals from denominators. Returns the matrix and right-hand side.
pub fn three_layer_system(p: &SpectralPoint, params: &ThreeLayerParams) -> ([[Complex64; 4]; 4], [Complex64; 4]) {
    let w1 = p.w(params.k1);
    let w2 = p.w(params.k2);
    let w3 = p.w(params.k3);
    let e2 = (-params.d * w2).exp();
    let e3 = (-params.d * w3).exp();
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let a = [
        [-w2, w1, w1 * e2 * e2, z],
        [z, w3 * e2, w3 * e2, -w2 * e3],
        [one, one, -e2 * e2, z],
        [z, e2, -e2, -e3],
    ];
    (a, [w2, z, one, z])
}

/// Solves the interface system by Gaussian elimination with partial pivoting.
pub fn sigma_three_layer_solve(lambda: f64, params: &ThreeLayerParams) -> Result<[Complex64; 4]> {
    let p = SpectralPoint::Real(lambda);
    let (mut a, mut b) = three_layer_system(&p, params);
    // Columns carry e^{−d w} factors of very different size; equilibrate them.
    let mut scale = [0.0f64; 4];
    for (c, s) in scale.iter_mut().enumerate() {
        *s = (0..4).map(|r| a[r][c].norm()).fold(0.0, f64::max);
        if !(*s > 0.0) {
            return Err(Error::Singular { lambda: p.lambda() });
        }
        for row in a.iter_mut() {
            row[c] /= *s;
        }
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap()).unwrap();
        if a[piv][col].norm() <= 1e-14 {
            return Err(Error::Singular { lambda: p.lambda() });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for c in col..4 {
                let v = a[col][c];
                a[row][c] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for c in row + 1..4 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    for (v, s) in x.iter_mut().zip(scale) {
        *v /= s;
    }
    Ok(x)
}

/// Closed-form value of the kernel where the method of images gives one.
pub fn reference_value(spec: &KernelSpec, x: [f64; 2], x0: [f64; 2]) -> Option<Complex64> {
    let quarter_i = Complex64::new(0.0, 0.25);
    let k = spec.k_target;
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let image = [x0[0], -x0[1]];
    match (spec.family, spec.sigma) {
        (Family::FreeSpace, _) => hankel1(0, k * dist(x, x0)).ok().map(|h| quarter_i * h),
        (Family::DirichletScattered, _) => hankel1(0, k * dist(x, image)).ok().map(|h| -quarter_i * h),
        (Family::ImpedanceScattered, SigmaFunction::Constant(_)) => {
            hankel1(0, k * dist(x, image)).ok().map(|h| quarter_i * h)
        }
        _ => None,
    }
}
