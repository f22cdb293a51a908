use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// A file was readable but its contents are malformed (bad magic,
    /// truncated payload, header/payload mismatch).
    #[error("malformed data: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("edge fit failed: {0}")]
    Fit(#[from] FitError),

    /// Edge fit failure on one named image of a before/after pair.
    #[error("edge fit failed on {side} image: {source}")]
    SideFit {
        side: &'static str,
        #[source]
        source: FitError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::Format(_) => "format",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite(_) => "non_finite",
            Error::Fit(_) | Error::SideFit { .. } => "fit_failed",
        }
    }
}

/// Reasons an edge-spread-function fit can fail.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("profile has no intensity transition")]
    Flat,
    #[error("edge is sharper than the sampling grid (fitted sigma {sigma:.3e})")]
    BelowResolution { sigma: f64 },
    #[error("profile does not follow a monotone edge (relative rms residual {relative_rms:.3})")]
    NotAnEdge { relative_rms: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}
