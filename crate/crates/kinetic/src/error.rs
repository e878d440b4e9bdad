use thiserror::Error;

#[derive(Debug, Error)]
pub enum KineticError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sigma is not a unit vector: |sigma| deviates by {deviation:e}")]
    NonUnitSigma { deviation: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("quadrature failed to converge: residual {residual:e} (tolerance {tolerance:e})")]
    QuadratureNonConvergent { residual: f64, tolerance: f64 },

    #[error("sampler rejected {0} consecutive draws")]
    DegenerateSampler(usize),

    #[error("negative density value {0:e} beyond tolerance")]
    NegativeDensity(f64),

    #[error("checkpoint {0} not present in trajectory")]
    MissingCheckpoint(f64),

    #[error("point clouds of unequal size ({0} vs {1}); resample to a common size")]
    UnequalCloudSizes(usize, usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
}
