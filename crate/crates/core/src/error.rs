use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    /// A specified 2x2 principal block of a partial matrix is not PSD, so no completion exists.
    #[error("principal block ({index}, {next}) is not positive semidefinite (min eigenvalue {min_eig:.3e})", next = .index + 1)]
    InfeasibleBlock { index: usize, min_eig: f64 },

    /// The operation's precondition on cone membership does not hold.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
