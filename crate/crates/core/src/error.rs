use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {what} = {value} ({rule})")]
    Domain {
        what: &'static str,
        value: f64,
        rule: &'static str,
    },

    /// The result is not representable in double precision.
    #[error("range error: {0}")]
    Range(String),

    #[error("non-finite intermediate in {subterm} at rho_b = {rho_b}")]
    NonFinite { subterm: &'static str, rho_b: f64 },

    #[error("evaluation failed at scan index {index}: {source}")]
    Evaluation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "quadrature did not reach tolerance after {evals} evaluations \
         (estimate {estimate_re:e}{estimate_im:+e}i, error bound {error_bound:e})"
    )]
    Convergence {
        estimate_re: f64,
        estimate_im: f64,
        error_bound: f64,
        evals: usize,
    },

    #[error("data error at point {index}: {reason}")]
    Data { index: usize, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("fit refused: {0}")]
    Unconverged(String),

    #[error("report invariant violated: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input (config, data, parameters).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. } | Error::Data { .. } | Error::Parse { .. } | Error::Config { .. }
        )
    }
}

pub(crate) fn require_positive(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            rule: "must be finite and > 0",
        })
    }
}

pub(crate) fn require_non_negative(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            rule: "must be finite and >= 0",
        })
    }
}

pub(crate) fn require_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            rule: "must be finite",
        })
    }
}
