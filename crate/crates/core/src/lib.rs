//! Randomly truncated Robbins-Monro stochastic approximation.
//!
//! The recursion `X_{n+1} = X_n - gamma_{n+1}(u(X_n) + dM_{n+1})` is confined to
//! an expanding family of balls `K_0 ⊂ K_1 ⊂ ...`; whenever an iterate would
//! leave the current ball it is reset and the ball index grows. The crate
//! provides the iteration itself ([`solver`]), the closed-form limiting
//! covariance of `(X_n - x*)/sqrt(gamma_n)` ([`asymptotics`]), benchmark
//! problems with known ground truth ([`problems`]) and a Monte Carlo harness
//! checking the central limit theorem ([`verify`]).

pub mod asymptotics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod solver;
pub mod verify;

pub use asymptotics::{asymptotic_covariance, check_stability, CovarianceResult, Regime};
pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix, Vector};
pub use model::{GainSchedule, Problem, ResetPolicy, RngStream, TruncationSequence};
pub use problems::{NoiseScale, Param, ProblemSpec};
pub use solver::{Algorithm, DivergenceReport, IterateState, PlainOutcome, Trajectory};
pub use verify::{CltReport, ReplicationResult, Tolerances};
