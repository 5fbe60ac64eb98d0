use thiserror::Error;

/// Errors raised by the curvature, geometry and flow routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("curvature symmetry violated: {what} residual {residual:.3e}")]
    CurvatureSymmetry { what: &'static str, residual: f64 },

    #[error("traceless Ricci part has trace {0:.3e}")]
    NotTraceless(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("field of length {got} does not match grid with {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("pole parity violated: {0}")]
    Parity(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate denominator in {0}")]
    Degenerate(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at tau = {tau:.6e} (dt = {dt:.3e})")]
    StepUnderflow { tau: f64, dt: f64 },

    #[error("curvature blow-up: sup |Rm| = {sup_rm:.3e} at tau = {tau:.6e}")]
    Singularity { tau: f64, sup_rm: f64 },

    #[error("failed to parse {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
