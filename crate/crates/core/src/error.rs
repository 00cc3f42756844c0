use crate::model::Scheme;

/// Errors raised by the analysis routines.
///
/// Messages that come from a specific closed form or boundary condition carry
/// the equation tag (for example `eq13`) so a caller can tell which formula
/// broke down.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("scheme {scheme:?} requires parameter `{name}`")]
    MissingParameter { scheme: Scheme, name: &'static str },

    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duty cycle saturated {0}")]
    DutySaturated(Saturation),

    #[error("grazing orbit: y'(d-) - h' = {denominator:e} is too small for a transversal switch")]
    Grazing { denominator: f64 },

    #[error("{equation}: singular denominator ({denominator:e})")]
    SingularDenominator {
        equation: &'static str,
        denominator: f64,
    },

    #[error("{equation}: no positive critical value, denominator is {denominator:e}")]
    NonPositiveDenominator {
        equation: &'static str,
        denominator: f64,
    },

    #[error("harmonic series tail estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    TailNotConverged { estimate: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("need at least {needed} settled cycles, have {available}")]
    InsufficientCycles { needed: usize, available: usize },

    #[error("classification is {0} at both ends of the range")]
    NoBracket(&'static str),
}

/// Which end of the cycle the duty ratio was pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// y(t) starts at or below the ramp, so the switch never turns on.
    Low,
    /// y(t) never reaches the ramp within the cycle.
    High,
}

impl std::fmt::Display for Saturation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Saturation::Low => f.write_str("at D = 0"),
            Saturation::High => f.write_str("at D = 1"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
