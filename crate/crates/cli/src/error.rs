use thiserror::Error;
use truncsa::DivergenceReport;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] truncsa::Error),

    #[error("plain recursion diverged at step {}", .0.diverged_at)]
    Diverged(DivergenceReport),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use truncsa::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged(_) | CliError::Io(_) => EXIT_RUNTIME,
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. }
                | E::InvalidParameter { .. }
                | E::NotSymmetric { .. }
                | E::NotPositiveDefinite { .. }
                | E::NearSingular { .. }
                | E::RegimeBoundary { .. }
                | E::InitialPointOutside { .. }
                | E::ResetTargetOutside { .. }
                | E::ProblemInvariant { .. }
                | E::UnknownProblem(_) => EXIT_CONFIG,
                E::InsufficientSample { .. } => EXIT_VERDICT,
                E::NoConvergence { .. }
                | E::NonFinite { .. }
                | E::NotRecorded { .. }
                | E::Quadrature(_)
                | E::Replication { .. } => EXIT_RUNTIME,
            },
        }
    }
}
