use thiserror::Error;

/// Errors produced by model construction, the solvers and the analyses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("phase count must be at least 3, got {0}")]
    TooFewPhases(usize),

    #[error("decay factors must satisfy 1 = d1 > d2 > ... > 0, got {0:?}")]
    NonMonotoneDecay(Vec<f64>),

    #[error("operation requires a {expected}-phase model, got {actual} phases")]
    WrongPhaseCount { expected: usize, actual: usize },

    #[error(
        "model is unstable: arrival rate {arrival_rate} >= mean service rate {mean_service_rate}"
    )]
    Unstable {
        arrival_rate: f64,
        mean_service_rate: f64,
    },

    #[error("M/M/1 queue is unstable: arrival rate {arrival_rate} >= service rate {service_rate}")]
    UnstableMm1 {
        arrival_rate: f64,
        service_rate: f64,
    },

    #[error("rate matrix iteration did not converge after {iterations} iterations (last difference {last_residual:e})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("boundary system has null space of dimension != 1 (singular values {smallest:e}, {second:e})")]
    RankDeficiency { smallest: f64, second: f64 },

    #[error("stationary vector has negative component {value:e} at index {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("linear solve failed: {0}")]
    IllConditioned(String),

    #[error("truncation level {requested} is below the minimum {minimum}")]
    TruncationTooSmall { requested: usize, minimum: usize },

    #[error("no sign change of the E(L) difference on the scanned stable range")]
    NoCrossover,
}

pub type Result<T> = std::result::Result<T, Error>;
