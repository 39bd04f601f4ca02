use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants split into input/validation failures and numerical-contract
/// failures; [`Error::is_numerical`] tells the CLI which exit code to use.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unstable system: spectral radius estimate {estimate:.6} is not below 1")]
    UnstableSystem { estimate: f64 },

    #[error("no convergence after {iterations} iterations: {what}")]
    Convergence { what: String, iterations: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("not contractive within {k_max} powers (last norm {last_norm:e})")]
    NotContractive {
        k_max: usize,
        last_norm: f64,
        norms_trace: Vec<f64>,
    },

    #[error("state norm exceeded {limit:e} at step {step}")]
    Overflow {
        step: usize,
        limit: f64,
        truncated: Box<crate::simulate::Trajectory>,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error(
        "ill-posed least squares: smallest singular value {smallest:e} vs largest {largest:e}"
    )]
    IllPosed {
        smallest: f64,
        largest: f64,
        singular_values: Vec<f64>,
    },

    #[error("refused: {0}")]
    Refused(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical contract (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnstableSystem { .. }
                | Error::Convergence { .. }
                | Error::Construction(_)
                | Error::NotContractive { .. }
                | Error::Overflow { .. }
                | Error::ContractViolation(_)
                | Error::IllPosed { .. }
        )
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Refused(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
