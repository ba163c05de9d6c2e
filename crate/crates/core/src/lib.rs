//! Lattice toolkit for three-dimensional magnetic Dirac operators
//! `H0 = a1 Pi1 + a2 Pi2 + a3 P3 + beta m` with a magnetic field of constant
//! direction, and their perturbations by matrix-valued potentials with
//! Coulomb singularities.
//!
//! The crate computes the symmetrized internal spectrum and its gaps, checks
//! the fiber and commutator identities of the free operator on the lattice,
//! evaluates and measures Mourre lower bounds for the conjugate operator
//! `A = (Q3 F(P3) + F(P3) Q3) / 2`, and probes the limiting absorption
//! principle and the gap point spectrum of perturbed operators.

pub mod commands;
pub mod config;
pub mod error;
pub mod field;
pub mod lap;
pub mod lattice;
pub mod linalg;
pub mod mourre;
pub mod potentials;
pub mod report;
pub mod spectra;
pub mod spinor;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = faer::c64;

/// Version string embedded in every report header.
pub const TOOLKIT_VERSION: &str = concat!("magdirac ", env!("CARGO_PKG_VERSION"));

/// Pins dense kernels to a single thread so repeated runs are bitwise
/// identical.
pub fn init_deterministic() {
    faer::set_global_parallelism(faer::Par::Seq);
}
