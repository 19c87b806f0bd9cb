//! Error taxonomy shared by the library, the CLI, and the C bindings.
//!
//! Errors fall into two coarse categories that the CLI maps onto process
//! exit codes: input problems (bad dimensions, unparseable files, invalid
//! configuration) exit with 1, numerical failures (non-converged solver,
//! non-finite intermediate) exit with 2. Success is 0.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix shapes that do not line up (e.g. signals of unequal
    /// length, a basis block with the wrong number of rows).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Mathematically invalid argument (zero vector where a direction is
    /// required, nonpositive SNR, percentile outside [0, 100], ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input file; carries the location when it is known.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Inconsistent or incomplete run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed to meet its contract (no convergence,
    /// residual too large, non-finite values produced).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Filesystem-level failure, tagged with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error: 2 for numerical failures, 1 for
    /// everything else (input/config/IO problems).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }

    /// Convenience constructor for IO errors with path context.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
