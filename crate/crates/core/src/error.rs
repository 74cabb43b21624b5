use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jet of order {requested} requested, but the map supports at most order {supported}")]
    UnsupportedOrder { requested: usize, supported: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("arity mismatch: form takes {expected} arguments, got {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("element norm {norm} is not below 1, the Neumann series does not apply")]
    NotQuasiInvertibleBySeries { norm: f64 },

    #[error("chart coordinate has first-order seminorm {norm}, outside the contraction region (limit {limit})")]
    NotInContractionRegion { norm: f64, limit: f64 },

    #[error(
        "fixed-point iteration did not converge after {iterations} steps (last step {last_step:e})"
    )]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("local derivative norm {norm} at the query point is not below 1")]
    LocalNormTooLarge { norm: f64 },

    #[error("step count {steps} is below the required minimum {required}")]
    TooFewSteps { steps: usize, required: usize },

    #[error(
        "integration defect {defect:e} exceeds tolerance {tolerance:e}; refine the step count"
    )]
    DefectTooLarge { defect: f64, tolerance: f64 },

    #[error("group element leaves the chart domain (norm {norm}, radius {radius})")]
    ChartOverflow { norm: f64, radius: f64 },

    #[error("sampling constraint cannot be satisfied: {0}")]
    SamplingConstraint(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
