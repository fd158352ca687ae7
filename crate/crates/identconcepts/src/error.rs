//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by numerics, generators, samplers, discovery and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {remaining:.3e})")]
    EigNotConverged { sweeps: usize, remaining: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is {value:.3e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is rank deficient: singular values span {smallest:.3e} .. {largest:.3e}")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("matrix entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroRow { row: usize },

    #[error("component {index} value {value} outside its domain [{lo}, {hi}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("component {index} value {value} lies on the domain boundary; the Jacobian requires interior points")]
    BoundaryPoint { index: usize, value: f64 },

    #[error("rejected {attempts} consecutive mixing-matrix draws; condition bound {bound} is too tight")]
    MixingRejected { attempts: usize, bound: f64 },

    #[error("all {candidates} resampling candidates received zero weight; increase oversample_factor or the scale parameter")]
    DegenerateWeights { candidates: usize },

    #[error("correlation shrinkage underflowed below {floor:.1e}; the requested pair pattern is infeasible")]
    CorrelationInfeasible { floor: f64 },

    #[error("diagonal entry {index} of the Jacobian Gram matrix is zero (rank collapse)")]
    ZeroGramDiagonal { index: usize },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("concept matrix lost rank at step {step} (condition number {condition:.3e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
