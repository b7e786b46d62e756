use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("near-singular matrix: eigenvalue {eigenvalue:e} is below {threshold:e}")]
    NearSingular { eigenvalue: f64, threshold: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error(
        "alpha = 1 requires gamma*A - I/2 positive definite, but gamma*lambda_min(A) = {scaled_min_eigenvalue} <= 0.5; \
         this is the border between two convergence regimes and the sqrt(gamma_n) CLT does not apply"
    )]
    RegimeBoundary { scaled_min_eigenvalue: f64 },

    #[error("initial point lies outside K_0 (boundary margin {margin})")]
    InitialPointOutside { margin: f64 },

    #[error("reset target lies outside K_0 (boundary margin {margin})")]
    ResetTargetOutside { margin: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: u64 },

    #[error("state at step {step} was not recorded in the trajectory")]
    NotRecorded { step: u64 },

    #[error("insufficient sample: {what} needs at least {needed} samples, got {got}")]
    InsufficientSample {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("problem `{problem}` violates an invariant: {reason}")]
    ProblemInvariant { problem: String, reason: String },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("replication {stream_id} failed: {source}")]
    Replication {
        stream_id: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
