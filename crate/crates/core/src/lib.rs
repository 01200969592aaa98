//! Numerics for the quasiperiodically modulated Su-Schrieffer-Heeger chain.
//!
//! The crate builds the chain (and its 2D parent lattice) as dense Hermitian
//! matrices, diagonalizes them exactly, and derives topological and
//! localization diagnostics, quantum-walk observables with exact time
//! averages, analytic phase boundaries, critical-exponent fits and checks of
//! the chain's mappings onto related models.
//!
//! All energies are in units of the inter-cell tunneling `g` and times in
//! units of `1/g` (with `hbar = 1`).

pub mod criticality;
pub mod dynamics;
pub mod equivalence;
pub mod error;
mod linalg;
pub mod model;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
