//! Numerical laboratory for exactly solvable open-system models.
//!
//! Modules build on [`qcore`], a small dense complex linear-algebra layer.
//! Basis ordering everywhere: factor 0 is the most significant tensor index.

pub mod cqec;
pub mod holonomy;
pub mod monotones;
pub mod ode;
pub mod qcore;
pub mod rng;
pub mod spinbath;
pub mod subsys;
pub mod weakmeas;

pub use num_complex::Complex64 as C64;
pub use qcore::{ComplexMatrix, DensityMatrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{what} did not converge after {iters} iterations")]
    NoConvergence { what: &'static str, iters: usize },
    #[error("walk did not terminate within {steps} steps (last x = {last_x})")]
    NonTermination { steps: usize, last_x: f64, trace: Vec<f64> },
    #[error("degenerate path: gap {gap:.3e} at t = {t}")]
    DegeneratePath { gap: f64, t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
