use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite values encountered at t = {time} (blow-up or time step too large)")]
    NonFinite { time: f64 },

    #[error("no locked solution for A = {a}: attainable range is [{min}, inf)")]
    NoLockedSolution { a: f64, min: f64 },

    #[error("field is not soliton-like: relative L2 residual {residual:.3} exceeds 0.2")]
    NonSoliton { residual: f64 },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("CFL condition violated: dt = {dt} must be below dx = {dx}")]
    Cfl { dt: f64, dx: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),
}
