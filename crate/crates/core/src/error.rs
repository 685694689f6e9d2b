use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode registry: {0}")]
    InvalidRegistry(String),

    #[error("invalid occupation cutoff: {0}")]
    InvalidCutoff(String),

    #[error(
        "basis would hold {count} states, above the budget of {budget} \
         (per_mode_max={per_mode_max}, link_total_max={link_total_max:?}, \
         hooker_total_max={hooker_total_max:?}, marker_total_max={marker_total_max:?}); \
         reduce the caps"
    )]
    Capacity {
        count: u128,
        budget: usize,
        per_mode_max: u8,
        link_total_max: Option<u32>,
        hooker_total_max: Option<u32>,
        marker_total_max: Option<u32>,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("mode {0} is not registered")]
    UnknownMode(usize),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("unitarity drift {drift:e} exceeds tolerance {tolerance:e} at step size {dt}; decrease dt")]
    UnitarityDrift { drift: f64, tolerance: f64, dt: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("operator couples the subspace to its complement (leak {0:e})")]
    NotInvariant(f64),

    #[error("projector is not idempotent (defect {0:e})")]
    NotProjector(f64),

    #[error("{0}")]
    TooLarge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
