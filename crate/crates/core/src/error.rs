use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite {what} at x = {}", preview(.x))]
    NonFinite { what: &'static str, x: Vec<f64> },

    #[error("chain {chain}: {source}")]
    InChain {
        chain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("velocity too close to the v = 0 singularity (|v|² = {0:e})")]
    Singularity(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

fn preview(x: &[f64]) -> String {
    if x.len() <= 4 {
        format!("{x:?}")
    } else {
        format!(
            "[{:e}, {:e}, {:e}, … ({} coordinates)]",
            x[0],
            x[1],
            x[2],
            x.len()
        )
    }
}
