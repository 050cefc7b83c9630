use crate::manifold::Manifold;

/// Errors shared by the geometry, kernel, particle, and grid layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate projection: cannot normalize the zero vector onto the sphere")]
    DegenerateProjection,

    #[error("numerical blow-up: non-finite coordinates or drift")]
    NumericalBlowUp,

    #[error("numerical blow-up at outer iteration {outer_iter}")]
    BlowUpAt { outer_iter: usize },

    #[error("manifold mismatch: expected {expected}, got {found}")]
    ManifoldMismatch { expected: Manifold, found: Manifold },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("CFL violation: dt = {dt:.3e} exceeds the stable bound {max_dt:.3e}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
