use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("resource limit exceeded: {what} requires {requested}, limit is {limit}")]
    ResourceLimit {
        what: &'static str,
        requested: f64,
        limit: f64,
    },

    #[error("posterior became inconsistent at symbol {q}: every seed key has probability zero")]
    Inconsistent { q: usize },

    #[error("estimate undefined: {0}")]
    Domain(&'static str),

    #[error("quadrature did not converge: achieved error {achieved:e} bits, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
