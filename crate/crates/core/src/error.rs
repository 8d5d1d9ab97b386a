use std::path::PathBuf;

use thiserror::Error;

use crate::grid::Space;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected:?}-space field, got {found:?}")]
    WrongSpace { expected: Space, found: Space },

    #[error("field length {found} does not match grid size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid dispersion profile: {0}")]
    InvalidProfile(String),

    #[error("tau = {0} is outside [0, 1]")]
    TauOutOfRange(f64),

    #[error("{what}: t = {t} is below the admissible minimum {min}")]
    TimeTooSmall { what: &'static str, t: f64, min: f64 },

    #[error("frequency lattice covers only {coverage:.4} of the x-nodes at t = {t}")]
    Coverage { t: f64, coverage: f64 },

    #[error("kernel denominator s + D = {0} is not positive")]
    NonPositiveDenominator(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("analysis rejected: {0}")]
    Analysis(String),

    #[error("identity check failed: {0}")]
    CrossCheck(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
