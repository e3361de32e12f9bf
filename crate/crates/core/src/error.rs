use thiserror::Error;

/// Errors surfaced by the clustering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Partition construction or deserialization hit an invalid assignment.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Two partitions cannot be compared (different n or K).
    #[error("incomparable partitions: {0}")]
    IncomparablePartitions(String),

    /// Matrix or vector dimensions do not match the expectation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    /// A generative model violates its invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A matrix expected to be symmetric is not, within tolerance.
    #[error("matrix not symmetric: max |M - M^T| entry is {0:.3e}")]
    NotSymmetric(f64),

    /// An operation received an out-of-range or inconsistent parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Not enough data points for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The data is degenerate for the requested operation.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Exhaustive enumeration refused because the state space is too large.
    #[error("enumeration refused: n = {n} exceeds the cap {max}")]
    EnumerationTooLarge { n: usize, max: usize },

    /// A numerical routine (eigendecomposition) failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input contains non-finite values.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// File or stream I/O failed.
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Parsing an interchange file failed.
    #[error("parse failure in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
