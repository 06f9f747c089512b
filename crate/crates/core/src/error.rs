use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("vertex {target} is unreachable from the source")]
    Unreachable { target: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{key}`: {msg}")]
    InvalidParameter { key: String, msg: String },

    #[error("corrector did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered at vertex {vertex}")]
    NonFinite { vertex: usize },

    #[error("cache error: {0}")]
    Cache(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn param(key: &str, msg: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
