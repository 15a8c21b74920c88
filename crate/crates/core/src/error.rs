use thiserror::Error;

/// Errors produced by model construction, sampling and post-processing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FenError {
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },

    #[error("requested {requested} eigenvectors but the graph has only {nodes} nodes")]
    TooManyEigenvectors { requested: usize, nodes: usize },

    #[error("sample size {0} is too small for the spline basis (need at least 32)")]
    SampleTooSmall(usize),

    #[error("knot placement collapsed: {0}")]
    DuplicateKnots(String),

    #[error("value {0} lies outside the unit interval")]
    Domain(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, FenError>;
