use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A feedback kernel was evaluated on the edge of the state space.
    #[error("boundary state: {0}")]
    Boundary(String),

    #[error("outside the model domain: {0}")]
    Domain(String),

    #[error("spectral exponent undefined: eta = 1 makes beta diverge")]
    UndefinedExponent,

    #[error("mood undefined: no chartists (n_o + n_p = 0)")]
    UndefinedMood,

    #[error("chain disconnected at state {state}: {detail}")]
    Disconnected { state: usize, detail: String },

    #[error("generator is reducible: {0}")]
    Reducible(String),

    #[error("stationary solve did not converge: residual {residual:e} after {iterations} sweeps")]
    NotConverged { residual: f64, iterations: usize },

    #[error("no real decomposition with symmetric S: residual {residual:e}")]
    NoRealSolution { residual: f64 },

    #[error("non-finite coefficient at t = {t}: state {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("insufficient frequency span: {0}")]
    InsufficientSpan(String),

    #[error("degenerate fit range: {0}")]
    DegenerateRange(String),

    #[error("window {window} is not a multiple of sample spacing {dt}")]
    WindowNotOnGrid { window: f64, dt: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
