use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown problem `{0}` (expected one of: example1, example2)")]
    NotFound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value {value} at atom {atom} (location {location})")]
    NonFiniteAtom { atom: usize, location: f64, value: f64 },

    #[error("non-finite interpolated value {value} at x = {x}")]
    NonFiniteInterpolant { x: f64, value: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (residual {residual:e})")]
    PicardDiverged { iterations: usize, residual: f64 },

    #[error("backward step failed at level {level}, grid index {index}: {source}")]
    Step {
        level: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
