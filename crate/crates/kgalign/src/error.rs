//! Error taxonomy shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("node lookup failed: {0}")]
    Lookup(String),
    #[error("feature coverage error: node(s) without features: {0}")]
    Coverage(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl KgError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        KgError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgError>;
