//! Library error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two stream elements carried the same tag but different rows.
    #[error("tag {tag} is inconsistent: row at position {position} differs from its first occurrence")]
    TagInconsistency { tag: u64, position: usize },

    /// A turnstile prefix drove some row's cumulative frequency negative.
    #[error("turnstile stream deletes a row more often than it was inserted (update {position})")]
    NegativeFrequency { position: usize },

    /// Argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input matrix does not have full column rank where required.
    #[error("matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    /// An iterative solver stopped without meeting its tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// Sparse recovery ran out of capacity after the allowed retries.
    #[error("sparse recovery overflow: {0}")]
    RecoveryOverflow(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("serialization error: {0}")]
    Serialize(String),
}
