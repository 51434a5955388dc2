use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config not found: {0}")]
    MissingConfig(PathBuf),
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] horizon_core::Error),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: bad value `{value}` in column `{column}`")]
    BadValue {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{0}: existing run was produced by a different config; refusing to overwrite")]
    ConfigMismatch(PathBuf),
    #[error("{0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
