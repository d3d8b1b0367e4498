use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested evaluation is numerically ill-posed (e.g. `b` too close
    /// to an integer for the connection formula).
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// An iterative method did not converge.
    #[error("numerical failure in {what}: {detail}")]
    Numerical { what: &'static str, detail: String },

    /// The Stieltjes recurrence lost positivity.
    #[error("ill-conditioned recurrence: beta[{index}] = {value:e}")]
    IllConditioned { index: usize, value: f64 },

    /// The spectral window misses too much mass.
    #[error("density window too narrow: norm defect {defect:e}; extend the window by about {suggested_decades:.1} decades")]
    WindowTooNarrow { defect: f64, suggested_decades: f64 },

    /// Invalid or degenerate data.
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            what,
            detail: detail.into(),
        }
    }
}
