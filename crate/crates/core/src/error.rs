use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gradient of the defining function vanishes at the requested point")]
    VanishingGradient,
    #[error("derivative order {order} exceeds the declared maximum {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("contraction of a form with no antiholomorphic factor")]
    DegreeZeroContraction,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("coincident points z = zeta")]
    Coincident,
    #[error("support function vanishes: |S| = {0:e}")]
    VanishingSupport(f64),
    #[error("scale {0} exceeds the collar budget")]
    ScaleTooLarge(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("too few usable levels for a fit: {0}")]
    TooFewLevels(usize),
    #[error("{0} non-finite integrand values exceed the tolerance")]
    NonFinite(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
