//! Resonances, regularized determinants and the spectral shift function of a 3D Pauli
//! operator with constant magnetic field, perturbed by a 2x2 matrix potential, near the
//! bottom of its spectrum.
//!
//! The transverse side lives on Landau levels (angular-momentum channels for radial
//! potentials), the field axis on a composite Gauss–Legendre grid.

pub mod birman_schwinger;
pub mod dense;
pub mod error;
pub mod landau;
pub mod longitudinal;
pub mod model;
pub mod potentials;
pub mod quadrature;
pub mod resonances;
pub mod ssf;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
