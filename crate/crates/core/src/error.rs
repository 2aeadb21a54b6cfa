/// Errors raised by the covariant toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// No rational power product of the inputs carries the target dimension.
    #[error("infeasible: target not spanned by the input dimensions")]
    Infeasible,
    #[error("mixed dimensions in a sum: {0} and {1}")]
    MixedDims(String, String),
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("empty class: {0}")]
    EmptyClass(String),
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {0}")]
    NonFinite(usize),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
