use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("window under-resolved")]
    UnderResolved,
    #[error("degenerate path")]
    DegeneratePath,
    #[error("circulant embedding has a negative eigenvalue ({0:.3e}); raise N")]
    Embedding(f64),
    #[error("plateau at level {0}")]
    Plateau(f64),
    #[error("dimension too large for histogram local times")]
    DimensionTooLarge,
    #[error("identity check limited to p<=2")]
    IdentityOrder,
    #[error("hypotheses violated: {0}")]
    Hypotheses(String),
    #[error("excluded exponent")]
    ExcludedExponent,
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
