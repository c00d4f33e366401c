use thiserror::Error;

/// Errors raised by the data model, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed{}: {message}", task.map(|t| format!(" for task {t}")).unwrap_or_default())]
    Validation { task: Option<usize>, message: String },

    /// A derivative value lies outside the range an energy function can produce.
    #[error("derivative value {sigma} is outside the range of the energy function")]
    Domain { sigma: f64 },

    /// A time window is longer than the tasks can absorb on their capped domains.
    #[error("window of {window} s exceeds the capped domain; binding task {task}")]
    DomainSaturation { task: usize, window: f64 },

    /// No schedule meets every deadline (and rate limit, where enforced).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn invalid(task: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Validation {
            task,
            message: msg.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
