//! Bogoliubov–Dirac–Fock vacuum with an ultraviolet cutoff, discretized on a
//! periodic momentum lattice.
//!
//! The crate solves the self-consistent equation
//! Q = χ_(−∞,μ](D⁰ − κV_ν + α(V_{ρ_Q} − R_Q)) − P⁰₋ by exact diagonalization,
//! evaluates the charge-renormalization functions B_Λ(k), and measures how the
//! threshold for static pair production moves with the coupling α.

pub mod coulomb;
pub mod dirac;
pub mod energy;
pub mod error;
pub mod io;
pub mod lattice;
pub mod pairprod;
pub mod quadrature;
pub mod scf;
pub mod spectral;
pub mod states;
pub mod suite;

pub use error::{BdfError, Result};
