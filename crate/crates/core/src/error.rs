use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::timescale::ScaleError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("unknown axis {0}; expected 1 or 2")]
    Axis(u8),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("kernel {name} is negative ({value}) at (x={x}, y={y}, z={z})")]
    NegativeKernel {
        name: &'static str,
        value: f64,
        x: f64,
        y: f64,
        z: f64,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
