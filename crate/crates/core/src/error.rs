use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension parameter n must be at least 1, got {0}")]
    InvalidDimension(usize),

    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("{what} must be finite")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("metric matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("metric matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("metric matrix condition number {condition:e} exceeds 1e12")]
    IllConditioned { condition: f64 },

    #[error("operation requires the standard (identity) horizontal metric")]
    NonStandardMetric,

    #[error("{what} outside of its domain: {value}")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error("point lies on the singular set (|∇u+F| = {norm:e})")]
    SingularPoint { norm: f64 },

    #[error("finite differences need interior neighbours; node is too close to the boundary")]
    BoundaryNode,

    #[error("point does not coincide with a grid node")]
    NotANode,

    #[error("variation support {0}")]
    BadVariation(&'static str),

    #[error("degenerate quotient: {0}")]
    Degenerate(&'static str),

    #[error("target point is unreachable inside the lattice box")]
    Unreachable,

    #[error("ball of radius {radius} is clipped by the lattice box")]
    BallClipped { radius: f64 },

    #[error("mollification radius {sigma} is below the 2-cell minimum")]
    MollifierTooSmall { sigma: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("deformation adds no volume (leaf region lies inside the set)")]
    NoVolumeAdded,

    #[error("target volume {volume:e} is below the resolution floor {floor:e}")]
    VolumeTooSmall { volume: f64, floor: f64 },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        last: Box<crate::optimizer::AxiProfile>,
    },

    #[error("axisymmetric reduction disagrees with the 2-D area by {discrepancy:e}")]
    ReductionMismatch { discrepancy: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Failures of the numerics themselves, as opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite
                | Error::IllConditioned { .. }
                | Error::SingularPoint { .. }
                | Error::Degenerate(_)
                | Error::Unreachable
                | Error::BallClipped { .. }
                | Error::NoVolumeAdded
                | Error::NotConverged { .. }
                | Error::ReductionMismatch { .. }
                | Error::NonFinite { .. }
        )
    }
}
