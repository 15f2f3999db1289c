use std::io;

use thiserror::Error;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame too small: {width}x{height}, need at least {min_width}x{min_height}")]
    FrameTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("degenerate level-set region ({region}): weight sum {weight:e}")]
    DegenerateRegion { region: &'static str, weight: f64 },

    #[error("SMO did not converge after {iterations} iterations (KKT violation {violation:e})")]
    NoConvergence { iterations: usize, violation: f64 },

    #[error("ensemble training exhausted {retries} retries without an acceptable hypothesis")]
    RetriesExhausted { retries: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::UnknownTarget(_) => {
                ErrorKind::Config
            }
            Error::DegenerateRegion { .. }
            | Error::NoConvergence { .. }
            | Error::RetriesExhausted { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
