use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("energy causality violated: cannot transmit from an empty battery")]
    EnergyCausality,

    #[error("inconsistent observation: {0}")]
    InconsistentObservation(String),

    #[error("relative value iteration hit the limit of {iterations} iterations (last span {span:e})")]
    IterationLimit { iterations: usize, span: f64 },

    #[error("non-finite value detected at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("stationary distribution did not converge within {iterations} iterations (residual {residual:e})")]
    StationaryNotConverged { iterations: usize, residual: f64 },

    #[error("multiplier bracket is infeasible: command rate {rate} exceeds budget {budget} at the upper bound")]
    NonBracketing { rate: f64, budget: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical routines (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IterationLimit { .. }
                | Error::NonFinite { .. }
                | Error::StationaryNotConverged { .. }
                | Error::NonBracketing { .. }
        )
    }
}
