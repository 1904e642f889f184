use thiserror::Error;

/// Errors raised by the library. Validation *failures* of a well-formed box
/// are reported through [`crate::ValidationReport`], not through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("problem too large: size {0} exceeds the cap of {1}")]
    TooLarge(usize, usize),

    #[error("invalid event: {0}")]
    Event(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid Collins-Gisin vector: reconstructed probability {value:e} at table entry {entry}")]
    InvalidCg { entry: usize, value: f64 },

    #[error("conditioning on an event of probability {0:e}")]
    ZeroProbability(f64),

    #[error("malformed wiring: {0}")]
    Wiring(String),

    #[error("events {0} and {1} are not locally orthogonal")]
    NotOrthogonal(String, String),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("optimizer box is inconsistent: {0}")]
    Inconsistent(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
