use thiserror::Error;

/// Errors raised by the numerical and statistical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the valid domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The power parameter is at or below the propriety bound of an improper
    /// initial prior, so the scale factor `C(delta)` is infinite.
    #[error("delta = {delta} is outside the propriety domain (delta must exceed delta_min = {delta_min})")]
    Propriety { delta: f64, delta_min: f64 },

    /// A function evaluation produced NaN.
    #[error("evaluation error at node {node}: {reason}")]
    Evaluation { node: f64, reason: String },

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    /// Invalid combination of options (family, method, likelihood form ...).
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by numerical domains rather than configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Propriety { .. } | Error::Evaluation { .. } | Error::Initialization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
