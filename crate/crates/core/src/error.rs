use thiserror::Error;

/// Errors raised by model construction and the diagnostics built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not Hermitian (max |H - H^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("operation requires {required} boundary conditions")]
    Boundary { required: &'static str },

    #[error("chiral block structure violated: {0}")]
    ChiralStructure(String),

    #[error("near-zero modes cannot be chiral-paired: {0}")]
    ZeroModePairing(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
