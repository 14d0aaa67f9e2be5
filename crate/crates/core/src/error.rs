use thiserror::Error;

use crate::solvers::{LinearSolveReport, NewtonReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("field has {got} values, grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "time step {tau} violates tau * sup|f2''| <= 1/2 (sup|f2''| = {d2_sup}); max admissible tau = {max_tau}"
    )]
    InadmissibleStep { tau: f64, d2_sup: f64, max_tau: f64 },

    #[error("conjugate gradients did not converge: {0:?}")]
    CgNotConverged(LinearSolveReport),

    #[error("newton iteration did not converge: {0:?}")]
    NewtonNotConverged(NewtonReport),

    #[error("newton damping collapsed: {0:?}")]
    DampingCollapse(NewtonReport),

    #[error("chemical potential went negative: min {min} below -{tol}")]
    PositivityViolation { min: f64, tol: f64 },

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },

    #[error("final time {t_final} is not an integer multiple of tau = {tau}")]
    NotDivisible { t_final: f64, tau: f64 },

    #[error("trajectory does not store every step")]
    MissingSteps,

    #[error("time-step ladder is not nested: {0}")]
    LadderNotNested(String),

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot parse error at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}
