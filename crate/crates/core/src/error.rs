use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid truncation, parameters or mismatched operands.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("time {t} outside path domain [0, {end}]")]
    Domain { t: f64, end: f64 },

    /// A caller-side precondition on the numerical input was violated
    /// (non-Hermitian generator, open path where a loop is required, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:.3e} > tolerance {tolerance:.3e} after {intervals} intervals")]
    Quadrature {
        a: f64,
        b: f64,
        error: f64,
        tolerance: f64,
        intervals: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
