//! Maximal nonnegative invariant subspaces of dissipative operators in a
//! finite-dimensional Krein space `C^p (+) C^m` with `J = diag(I_p, -I_m)`.
//!
//! The invariant subspace is the graph of an angle operator `K: C^p -> C^m`
//! with `||K|| <= 1`. [`solver::solve_theorem`] builds it as the limit of
//! Galerkin truncations regularized by `i eps J`, each solved through a Riesz
//! projector of the upper half-plane.

pub mod block;
pub mod cli;
pub mod error;
pub mod harness;
pub mod krein;
pub mod numerics;
pub mod projector;
pub mod serde_complex;
pub mod solver;

pub use block::BlockOperator;
pub use error::{KreinError, Result};
pub use krein::{AngleOperator, KreinStructure, Subspace};
pub use numerics::{ComplexMatrix, ComplexVector};
pub use solver::{solve_theorem, solve_uniformly_dissipative, SolveReport, SolverConfig};
