//! Hybrid block coordinate descent for binary, ℓ0-regularized and
//! cardinality-constrained quadratic problems. Each block subproblem is
//! solved to global optimality by exhaustive search.

pub mod baselines;
pub mod data;
pub mod driver;
pub mod error;
pub mod io;
mod linalg;
pub mod model;
pub mod stationarity;
pub mod subsolver;
pub mod workset;

pub use driver::{certify_block_k, run, Certification, SolverConfig, SolverTrace, Termination, TieRule};
pub use error::{Error, Result};
pub use model::{Objective, Penalty, Problem, ReducedQuadratic};
pub use subsolver::{SubproblemResult, K_MAX};
pub use workset::SelectionStrategy;
