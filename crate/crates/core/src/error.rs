use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Coincident points, zero-length segments and similar degenerate input.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Two collinear segments overlap along a stretch rather than at a point.
    #[error("ambiguous intersection: collinear segments overlap")]
    AmbiguousIntersection,

    /// Two lines are parallel (or coincident) and have no unique intersection.
    #[error("lines are parallel (|det| = {det:e})")]
    ParallelLines { det: f64 },

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or parameter value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Missing, empty, or malformed data.
    #[error("data error: {0}")]
    Data(String),

    /// Underlying I/O failure, carried as text so the error stays `Clone`.
    #[error("i/o error: {0}")]
    Io(String),

    /// Parse failure with a 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
