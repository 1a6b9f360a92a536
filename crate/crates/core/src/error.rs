use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range [{lo}, {hi}]")]
    Bounds {
        what: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("mesh nesting violated: {0}")]
    Nesting(String),
    #[error("coefficient resolution violated: {0}")]
    Resolution(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular or indefinite system: {0}")]
    Singular(String),
    #[error("instability detected at step {step}: norm {norm:.3e} exceeds {limit:.3e}")]
    Instability { step: usize, norm: f64, limit: f64 },
    #[error("relative error undefined: reference is identically zero")]
    UndefinedRelative,
    #[error("cache mismatch: {0}")]
    Cache(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
