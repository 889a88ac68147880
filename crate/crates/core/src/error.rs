use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("budget exceeded: estimated cost {estimated} exceeds ceiling {ceiling}")]
    Budget { estimated: f64, ceiling: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
