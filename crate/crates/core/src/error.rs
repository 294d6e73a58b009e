use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid ensemble specification: {0}")]
    InvalidSpec(String),

    #[error("point {re}+{im}i coincides with an atom of the measure")]
    AtomPole { re: f64, im: f64 },

    #[error("no contour found in the search box")]
    EmptyContour,

    #[error("boundary refinement did not converge after {iterations} iterations (residual {residual:e})")]
    RefineNoConvergence { iterations: usize, residual: f64 },

    #[error("gradient of P00 vanishes near {re}+{im}i: point is (close to) quadratic")]
    NearQuadratic { re: f64, im: f64 },

    #[error("edge point is not regular ({0}); the repeated-erfc kernel does not apply")]
    NotRegular(String),

    #[error("invalid kernel argument: {0}")]
    KernelDomain(String),

    #[error("recurrence lost accuracy (condition estimate {condition:e})")]
    LossOfAccuracy { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}-point statistics need R_0 >= n, but the ensemble has R_0 = {1}")]
    InsufficientR0(usize, usize),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("trial {trial} failed twice: {source}")]
    TrialFailed {
        trial: usize,
        #[source]
        source: LinalgError,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
