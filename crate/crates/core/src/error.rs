use std::path::PathBuf;

use thiserror::Error;

use crate::params::ParamViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamViolation),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid evolution config: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("solution diverged at t = {t}, node {node} (r = {r}): |value| = {value:e} exceeds the divergence threshold")]
    Divergence { t: f64, node: usize, r: f64, value: f64 },

    #[error("outside the computational domain: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("scenario error in {field}: {message}")]
    Scenario { field: String, message: String },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario { field: field.into(), message: message.into() }
    }
}
