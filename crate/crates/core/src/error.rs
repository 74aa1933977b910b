use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("matrix is not positive definite (pivot {index}: {pivot:e}); increase the material stabilization alpha")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("degree-of-freedom map defect: {0}")]
    DofMap(String),
    #[error("time integration became unstable at step {step}")]
    Unstable { step: usize },
    #[error("time step {dt:e} exceeds the critical time step {dt_crit:e}")]
    TimeStepTooLarge { dt: f64, dt_crit: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
