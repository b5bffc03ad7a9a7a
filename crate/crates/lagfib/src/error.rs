//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by model validation, coordinate evaluation, and
/// numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// The combinatorial model violates an invariant.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A point lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A coordinate became singular (e.g. w_i = 0 where v_i is needed).
    #[error("singular coordinate: {0}")]
    SingularCoordinate(String),

    /// A fiberwise 2-form was too close to degenerate to invert.
    #[error("degenerate form: {0}")]
    DegenerateForm(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A model or configuration file failed to parse.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
