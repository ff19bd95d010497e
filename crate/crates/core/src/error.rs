use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("ill-conditioned radial fit for mode {mode}: condition number {cond:.3e}")]
    IllConditioned { mode: usize, cond: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("spectrum window too small: {0}")]
    InsufficientSpectrum(String),
    #[error("gluing data is antipodal: {0}")]
    Antipodal(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        detail: detail.into(),
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
