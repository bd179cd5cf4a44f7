//! Filesystem, network and command-line layer for `uqkit-core`.
//!
//! The computations all live in the core crate. This crate adds the HTTP
//! providers, the on-disk response cache, the run-record and CSV formats, a
//! threaded plan executor, and the `uqkit` command-line tool built from them.

pub mod cache;
pub mod commands;
pub mod config;
pub mod executor;
pub mod http;
pub mod io;
pub mod records;

pub use config::Config;

/// A command failure and the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input files. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A model service failed after retries. Exit code 3.
    #[error("{0}")]
    Provider(String),
    /// A metric cannot be computed from the available data. Exit code 4.
    #[error("{0}")]
    Incompatible(String),
    /// Scores and gold labels share no item. Exit code 5.
    #[error("{0}")]
    EmptyJoin(String),
    /// Writing outputs failed. Exit code 1.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Incompatible(_) => 4,
            CliError::EmptyJoin(_) => 5,
        }
    }
}
