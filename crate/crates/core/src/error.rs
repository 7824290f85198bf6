use num_complex::Complex64;
use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = KreinError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KreinError {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shift {mu} is numerically in the spectrum (sigma_min = {sigma_min:e})")]
    SingularShift { mu: Complex64, sigma_min: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("subspace is not maximal: P+ restricted to it has rank {rank} < {p}")]
    NotMaximal { rank: usize, p: usize },

    #[error("subspace is not nonnegative (min J-Rayleigh quotient {min_rayleigh:e})")]
    NotNonnegative { min_rayleigh: f64 },

    #[error("angle operator norm {norm} exceeds 1")]
    NormExceeded { norm: f64 },

    #[error("eigenvalue too close to the contour (distance {distance:e}, threshold {threshold:e})")]
    ContourTooClose { distance: f64, threshold: f64 },

    #[error("quadrature not converged: doubling the nodes changed the projector by {change:e}")]
    QuadratureNotConverged { change: f64 },

    #[error("eigenvalue {eigenvalue} lies within {tol:e} of the real axis")]
    BoundaryEigenvalue { eigenvalue: Complex64, tol: f64 },

    #[error("projector rank is ambiguous (trace {trace}, singular values around the cut: {above:e} / {below:e})")]
    RankAmbiguous { trace: f64, above: f64, below: f64 },

    #[error("sequence element {index} has an eigenvalue inside the region")]
    HypothesisViolated { index: usize, eigenvalue: Complex64 },

    #[error("Galerkin basis is rank deficient")]
    RankDeficientBasis,

    #[error("operator is not uniformly dissipative (margin {margin:e})")]
    NotUniformlyDissipative { margin: f64 },

    #[error("operator is not dissipative (margin {margin:e})")]
    NotDissipative { margin: f64 },

    #[error("condition (i) fails: -A22 is not dissipative (margin {margin:e})")]
    ConditionIFailed { margin: f64 },

    #[error("epsilon tail did not stabilise: {reason}")]
    NoCauchyConvergence { reason: String, report: Box<SolveReport> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
