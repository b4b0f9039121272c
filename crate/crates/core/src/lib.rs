//! Lossy binary-real matrix decomposition `W ≈ M C` by black-box
//! optimization over the spins of `M`.
//!
//! The crate eliminates the real factor by least squares, fits quadratic
//! surrogates (Bayesian linear regression with horseshoe, normal or
//! normal-gamma priors, or a factorization machine) to observed costs,
//! minimizes them with classical Ising solvers, and compares the results
//! against an exhaustive oracle.

pub mod analysis;
pub mod bench;
pub mod decomposition;
pub mod engine;
pub mod error;
pub mod ising;
pub mod linalg;
pub mod oracle;
pub mod surrogate;

pub use error::{Error, Result};
