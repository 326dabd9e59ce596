use nalgebra::DVector;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("kurtosis is infinite for Student t with {dof} degrees of freedom (need dof > 4)")]
    InfiniteKurtosis { dof: f64 },

    #[error("coordinate {0} has zero variance")]
    DegenerateCoordinate(usize),

    #[error("data has zero total variance")]
    ZeroVariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid taper template: {0}")]
    InvalidTemplate(String),

    #[error("template set is empty")]
    EmptyTemplateSet,

    #[error("spatial median did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize, last: DVector<f64> },

    #[error("quadratic program is infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("covariance estimate is singular; use a shrinkage estimator")]
    Singular,

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },
}
