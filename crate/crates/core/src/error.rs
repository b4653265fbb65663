use thiserror::Error;

use crate::tree::VertexId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("no least common prefix for a singleton")]
    SingletonPrefix,

    #[error("zeta series diverges at s = {s}: estimated abscissa is {abscissa}")]
    Divergent { s: f64, abscissa: f64 },

    #[error("cylinder of vertex {0} has zero measure")]
    ZeroMeasure(VertexId),

    #[error("matrix is not symmetric (max |M - M^T| = {0:e})")]
    NotSymmetric(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
