use num_complex::Complex64;
use thiserror::Error;

/// Errors reported by the numerical routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("overflow in {what} at order {order}, z = {z}")]
    Overflow { what: &'static str, order: i64, z: f64 },

    #[error("inadmissible geometry: {0}")]
    Geometry(String),

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error:e}")]
    NoConvergence { estimate: Complex64, error: f64 },

    #[error("singular interface system at lambda = {lambda}")]
    Singular { lambda: Complex64 },

    #[error("pole of the image term too close to the path near lambda = {lambda}")]
    PoleNearPath { lambda: Complex64 },

    #[error("expansion invalid: r = {r} is not smaller than rho = {rho}")]
    ExpansionInvalid { r: f64, rho: f64 },

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow { .. }
                | Error::NoConvergence { .. }
                | Error::Singular { .. }
                | Error::PoleNearPath { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
