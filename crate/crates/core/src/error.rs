use thiserror::Error;

/// Errors raised by the solver, the kernels and the validation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole of the characteristic factor: 1 - n z^2 = {gap:e}")]
    Pole { gap: f64 },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("infeasible schedule: {0}")]
    Infeasible(String),

    #[error("scale factor fell below floor {floor:e} at t = {t} (x1 = {x1:e})")]
    ScaleFloor { t: f64, x1: f64, floor: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("grid too small: half-width {half_width} does not cover Thomas-Fermi radius {radius} with the required margin")]
    GridTooSmall { radius: f64, half_width: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary leak at t = {t}: edge amplitude is {ratio:e} of peak")]
    BoundaryLeak { t: f64, ratio: f64 },

    #[error("norm drift {drift:e} exceeds tolerance {tol:e}")]
    NormDrift { drift: f64, tol: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Pole { .. }
                | Error::Infeasible(_)
                | Error::GridTooSmall { .. }
                | Error::GridMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
