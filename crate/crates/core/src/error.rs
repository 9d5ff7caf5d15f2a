use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown item id `{0}`")]
    UnknownItem(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite activation or loss; carries the layer or stage name.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("sampling error: {0}")]
    Sampling(String),
}

impl Error {
    /// Numeric and internal-consistency failures, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Shape(_))
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
