//! Batch front-end: configuration ingestion, pipeline orchestration and
//! CSV/JSON emission for the devfactor pipeline.
//!
//! Exit codes: 0 success, 1 check failure, 2 invalid configuration,
//! 3 integrand parse error, 4 singular integrand, 5 unclassified divergence
//! or model mismatch.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{dispatch, run, Cli, Command, Options, Summary};
pub use error::CliError;
