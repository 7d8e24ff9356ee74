//! Data-driven stability certificates for switched linear systems.
//!
//! Given sampled state transitions `(x, y)` with `y = A_sigma x`, the crate
//! solves a sampled quasi-linear program for a common quadratic Lyapunov
//! function, then turns the solution into a probabilistic upper bound on the
//! joint spectral radius.

pub mod blackbox;
pub mod certifier;
pub mod consensus;
pub mod error;
pub mod qlp;
pub mod rng;
pub mod scenario;
pub mod symmat;

pub use error::{Error, Result};
pub use symmat::{SymMatrix, SymMatrixVec};
