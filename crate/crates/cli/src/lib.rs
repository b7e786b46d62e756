//! Command-line front end for the truncated Robbins-Monro toolkit.
//!
//! Every command is a pure function of a JSON [`RunConfig`](config::RunConfig)
//! and a master seed. Exit codes: 0 success, 1 verdict failure, 2 config
//! error, 3 runtime error or divergence.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
