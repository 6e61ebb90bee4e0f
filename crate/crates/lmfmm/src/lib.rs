//! Fast multipole method for two-dimensional Helmholtz Green's functions in
//! layered media.
//!
//! Every kernel is stored in one canonical Sommerfeld form (see [`greens`]),
//! evaluated by contour-deformed quadrature ([`sommerfeld`]), and compressed
//! with Bessel-basis multipole and local expansions ([`expansions`],
//! [`translations`]) driven by an adaptive quadtree ([`fmm`]).

pub mod error;
pub mod expansions;
pub mod fmm;
pub mod greens;
pub mod quadrature;
pub mod sommerfeld;
pub mod special_functions;
pub mod translations;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
