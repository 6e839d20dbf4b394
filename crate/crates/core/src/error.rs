use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be a valid quantum state is not one (non-Hermitian,
    /// wrong trace, or an eigenvalue below the PSD tolerance).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A dense construction would exceed the configured Hilbert-dimension cap.
    #[error("resource cap exceeded: needed dimension {needed} > cap {cap}")]
    ResourceCap { needed: usize, cap: usize },

    /// The LAPACK eigensolver reported failure.
    #[error("eigensolver failed: zheevd returned info={0}")]
    Eigensolver(i32),
}

pub type Result<T> = std::result::Result<T, Error>;
