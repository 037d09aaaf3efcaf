use std::path::PathBuf;

use thiserror::Error;

use crate::gjrsk::GjrskParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Load { file: PathBuf, line: usize, msg: String },
    #[error("calendar error: {0}")]
    Calendar(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("diagnostics error: {0}")]
    Diagnostics(String),
    #[error("factor alignment error: {0}")]
    Alignment(String),
    #[error("standardization error: factor `{0}` has zero variance")]
    Standardization(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("estimation failed: {msg}")]
    Estimation {
        msg: String,
        best: Option<Box<GjrskParams>>,
    },
    #[error("lag selection error: {0}")]
    LagSelection(String),
    #[error("TVP-VAR error: {0}")]
    TvpVar(String),
    #[error("decomposition error: {0}")]
    Decomposition(String),
    #[error("spectral error at omega={omega}: {msg}")]
    Spectral { omega: f64, msg: String },
    #[error("band aggregation error: {0}")]
    Aggregation(String),
    #[error("export error: {0}")]
    Export(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("cross-validation error: {0}")]
    CrossValidation(String),
    #[error("prediction error: expected {expected} features, got {got}")]
    Prediction { expected: usize, got: usize },
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
