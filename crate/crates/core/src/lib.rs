//! Numerical laboratory for the symmetric local hidden state (SLHS) model.
//!
//! The crate evaluates the SLHS inequalities on bipartite density matrices,
//! searches local bases for maximal violation, simulates the two-qubit
//! interferometric protocol with shot noise, verifies the Bell-state
//! self-testing chain, and probes the nonlocality measure and its axioms.

pub mod basis_opt;
pub mod circuits;
pub mod error;
pub mod families;
pub mod inequalities;
pub mod measure;
pub mod qcore;
pub mod selftest;

pub use error::{Error, Result};
pub use qcore::{BipartiteState, ComplexMatrix, DensityMatrix, Ket, LocalBasis, Subsystem, C64};
