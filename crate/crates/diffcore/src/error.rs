use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("gradient output must be a 1x1 scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("non-finite gradient for parameter {0}; step rejected")]
    NonFiniteGradient(usize),
    #[error("parameter/gradient mismatch: {0}")]
    ParamMismatch(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
