//! Pipeline-wide error type with process exit-code mapping.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the pipeline, grouped by how they should terminate a
/// command-line run.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or parameters (bad flag values, unknown config
    /// keys, out-of-range settings).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or inconsistent input data (malformed CSV rows, non-monotone
    /// phase grids, empty corpora).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure (factorization breakdown, degenerate fit, mixture
    /// collapse).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Filesystem failure while reading or writing an artifact.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Builds a [`Error::Config`] from anything displayable.
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Error::Config(msg.to_string())
    }

    /// Builds a [`Error::Data`] from anything displayable.
    pub fn data(msg: impl std::fmt::Display) -> Self {
        Error::Data(msg.to_string())
    }

    /// Builds a [`Error::Numeric`] from anything displayable.
    pub fn numeric(msg: impl std::fmt::Display) -> Self {
        Error::Numeric(msg.to_string())
    }

    /// Wraps an I/O error together with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line runs: 2 for configuration errors,
    /// 3 for data errors, 4 for numeric failures. I/O problems count as data
    /// errors for exit purposes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_contract() {
        assert_eq!(Error::config("x").exit_code(), 2);
        assert_eq!(Error::data("x").exit_code(), 3);
        assert_eq!(Error::numeric("x").exit_code(), 4);
        let io = Error::io("/tmp/x", std::io::Error::other("gone"));
        assert_eq!(io.exit_code(), 3);
    }

    #[test]
    fn messages_carry_category_prefix() {
        assert!(Error::config("bad").to_string().starts_with("config error"));
        assert!(Error::data("bad").to_string().starts_with("data error"));
        assert!(Error::numeric("bad").to_string().starts_with("numeric failure"));
    }
}
