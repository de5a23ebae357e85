use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("constant polynomial")]
    ConstantPolynomial,
    #[error("degree {0} exceeds the supported bound of 64")]
    DegreeTooLarge(usize),
    #[error("parameter outside validity region: |eps| = {norm} > {radius}")]
    OutsideValidity { norm: f64, radius: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("path passes within {dist:e} of a singular point {point}")]
    NearSingularity { dist: f64, point: String },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("nodes coincide: {0}")]
    DegenerateNodes(String),
    #[error("not DES-generic: {0}")]
    NotGeneric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
