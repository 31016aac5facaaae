use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error {error:e} after {panels} panels")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        panels: usize,
    },

    #[error("mollifier moment constraint failed at order {order}: residual {residual:e}")]
    Infeasible { order: usize, residual: f64 },

    #[error("indeterminate limit: {0}")]
    Indeterminate(String),

    #[error("level {level} out of range (scale has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
