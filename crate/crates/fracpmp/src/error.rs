use thiserror::Error;

use crate::problem::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("series did not converge within {terms} terms")]
    Divergence { terms: usize },

    #[error("non-finite vector field value at step {step}")]
    NonFinite { step: usize },

    #[error("fixpoint iteration stalled after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("no built-in problem named `{0}`")]
    NotFound(String),

    #[error("config error{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Config {
        offset: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
