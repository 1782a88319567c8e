use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HipError {
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("joint {joint}: rotation is not orthonormal with positive determinant")]
    NotOrthonormal { joint: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("surface sampling starved: {rejected} of {attempts} candidates rejected")]
    RejectionStarved { rejected: usize, attempts: usize },
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),
    #[error("IoU undefined: both occupancies are empty on every sample")]
    EmptyUnion,
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("unknown subject {id}; known subjects: {known:?}")]
    UnknownSubject { id: usize, known: Vec<usize> },
    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
}

pub type Result<T> = std::result::Result<T, HipError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HipError + '_ {
    move |source| HipError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> HipError + '_ {
    move |source| HipError::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn format_err(path: &Path, msg: impl Into<String>) -> HipError {
    HipError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}
