//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside an operation's documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Structurally invalid argument (sizes, divisibility, ranges).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A numerical routine failed to reach its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A bracket or search range did not contain the sought value.
    #[error("range error: {0}")]
    Range(String),
    /// Counter capacity exceeded at the final layer; decoding impossible.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Internal invariant violated; indicates corrupted input or a bug.
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),
    /// Malformed serialized graph or curve data.
    #[error("parse error: {0}")]
    Parse(String),
}
