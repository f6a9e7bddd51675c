use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the library. Each variant names the module that
/// raised it so the CLI can surface where a pipeline stage failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: invalid parameter: {msg}")]
    Parameter { module: &'static str, msg: String },

    #[error("{module}: value out of domain: {msg}")]
    Domain { module: &'static str, msg: String },

    #[error("{module}: numeric failure: {msg}")]
    Numeric { module: &'static str, msg: String },

    #[error("{module}: bad data: {msg}")]
    Data { module: &'static str, msg: String },

    #[error("{module}: resource limit: {msg}")]
    Resource { module: &'static str, msg: String },

    #[error("{module}: lookup failed: {msg}")]
    Lookup { module: &'static str, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter { module, msg: msg.into() }
    }

    pub(crate) fn domain(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { module, msg: msg.into() }
    }

    pub(crate) fn numeric(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric { module, msg: msg.into() }
    }

    pub(crate) fn data(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Data { module, msg: msg.into() }
    }

    pub(crate) fn resource(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Resource { module, msg: msg.into() }
    }

    pub(crate) fn lookup(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Lookup { module, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 for usage/data problems, 3 for
    /// resource exhaustion. Invariant failures (1) are not errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resource { .. } => 3,
            _ => 2,
        }
    }
}
