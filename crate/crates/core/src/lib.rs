//! Numerical laboratory for matrix inner functions on conjugation-symmetric
//! multiply connected circular domains.
//!
//! The pipeline runs from geometry through harmonic measure, scalar test
//! functions, theta functions and the Fay reproducing kernel, to 2×2 matrix
//! inner functions and a discretized Agler-cone feasibility estimate of
//! `ρ_F`, the largest `ρ` for which `I − ρ² F(z)F(w)*` lies in the cone.

pub mod cli;
pub mod cone;
pub mod domain;
pub mod fay;
pub mod harmonic;
pub mod jacobian;
pub mod linalg;
pub mod matinner;
pub mod quad;
pub mod sdp;
pub mod svg;
pub mod testfn;
pub mod zeros;

pub use num_complex::Complex64 as C64;

pub const I: C64 = C64::new(0.0, 1.0);
