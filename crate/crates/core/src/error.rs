use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-numeric cell in {path} at row {row}, column {col}: {value:?}")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("view {0} is empty")]
    EmptyView(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),

    #[error("all pairwise distances are zero")]
    DegenerateDistances,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("degenerate treatment split: one group is empty")]
    DegenerateSplit,

    #[error("treatment or control group is empty")]
    EmptyGroup,

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("dataset has no labels")]
    NoLabels,

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
