//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors produced by cohort validation, model fitting, and evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A declared column or field is missing or malformed.
    Schema(String),
    /// A cell value could not be interpreted (carries row context).
    Value(String),
    /// An argument violates a precondition.
    Argument(String),
    /// A degenerate configuration (empty stratum, all-zero weights, ...).
    Degenerate(String),
    /// Model fitting failed.
    Fit(String),
    /// Evaluation failed.
    Eval(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Schema(m) => write!(f, "schema error: {m}"),
            Error::Value(m) => write!(f, "value error: {m}"),
            Error::Argument(m) => write!(f, "argument error: {m}"),
            Error::Degenerate(m) => write!(f, "degenerate input: {m}"),
            Error::Fit(m) => write!(f, "fit error: {m}"),
            Error::Eval(m) => write!(f, "evaluation error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
