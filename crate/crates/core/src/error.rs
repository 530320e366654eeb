use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance matrix is singular (det = {det:e})")]
    SingularCovariance { det: f64 },

    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    InvalidCovariance { min_eigenvalue: f64 },

    #[error("flux phi = {phi} is at a half flux quantum; the SQUID inductance diverges")]
    DivergentInductance { phi: f64 },

    #[error("pump power {power_dbm} dBm is at or above the critical power {critical_dbm} dBm")]
    UnstableRegime { power_dbm: f64, critical_dbm: f64 },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported filter: {0}")]
    UnsupportedFilter(String),

    #[error("degenerate data, fit is not identifiable: {0}")]
    FitDegenerate(String),

    #[error("least-squares fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("histogram range too small: overflow fraction {fraction:.4} exceeds {limit}")]
    RangeTooSmall { fraction: f64, limit: f64 },

    #[error("degenerate pump-off reference: {0}")]
    DegenerateReference(String),

    #[error(
        "reconstructed state is unphysical (min eigenvalue of V + iΩ/4 is {min_eigenvalue:e})"
    )]
    Unphysical { min_eigenvalue: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. }
                | Error::InvalidCovariance { .. }
                | Error::FitDegenerate(_)
                | Error::NoConvergence { .. }
                | Error::RangeTooSmall { .. }
                | Error::DegenerateReference(_)
                | Error::Unphysical { .. }
                | Error::Internal(_)
                | Error::UnstableRegime { .. }
                | Error::DivergentInductance { .. }
        )
    }
}
