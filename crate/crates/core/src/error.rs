use thiserror::Error;

use crate::charts::ChartId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular matrix: pivot {pivot:e} below threshold {threshold:e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("non-finite sample: {0}")]
    NonFiniteSample(String),

    #[error("invalid dimension {0}")]
    InvalidDimension(usize),

    #[error("point {coords:?} lies outside the overlap of charts {from} -> {to}")]
    OutsideOverlap {
        from: ChartId,
        to: ChartId,
        coords: Vec<f64>,
    },

    #[error("unknown chart or chart pair: {0}")]
    UnknownChart(String),

    #[error("atlas declares no embedding")]
    MissingEmbedding,

    #[error("degenerate metric at {chart} {coords:?}: {reason}")]
    DegenerateMetric {
        chart: ChartId,
        coords: Vec<f64>,
        reason: String,
    },

    #[error("atlas mismatch: {0}")]
    AtlasMismatch(String),

    #[error("finite-difference stencil leaves the chart domain at {chart} {coords:?}")]
    StencilOutOfDomain { chart: ChartId, coords: Vec<f64> },

    #[error("zero velocity: {0}")]
    ZeroVelocity(String),

    #[error("insufficient samples: need {needed}, segment has {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("shooting did not converge ({message}); best endpoint residual {best_residual:e}")]
    NoConvergence { best_residual: f64, message: String },

    #[error("perturbed curve leaves the chart domain: {0}")]
    ChartExit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
