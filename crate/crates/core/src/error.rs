use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (limit {limit}) for {what}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A constraint cannot be handled by exact inference and must go through
    /// the Gibbs sampler.
    #[error("constraint {0} is not edge-factored; use sampled expectations (gibbs)")]
    Routing(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 1 usage, 2 data,
    /// 3 optimization, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Optimization(_) | Error::Numeric(_) => 3,
            Error::Invariant(_) => 4,
            Error::Index { .. }
            | Error::Refused(_)
            | Error::Contract(_)
            | Error::Routing(_)
            | Error::Parse { .. }
            | Error::Io { .. } => 2,
        }
    }
}
