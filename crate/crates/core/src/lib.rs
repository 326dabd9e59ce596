//! Linear shrinkage estimators of covariance matrices under elliptical
//! sampling, with exact finite-sample moment formulas to tune and check them.

pub mod error;
pub mod matrix;
pub mod mc;
pub mod models;
pub mod multiclass;
pub mod portfolio;
pub mod qp;
pub mod rscm;
pub mod scalars;
pub mod scm;
pub mod tabasco;
pub mod theory;

pub use error::{Error, Result};
pub use matrix::CovMatrix;
pub use models::{EllipticalModel, Family};
pub use multiclass::{ClassScalars, PolyCoeffs};
pub use portfolio::{BacktestConfig, Estimator, ReturnsPanel};
pub use qp::{QpProblem, QpSolution};
pub use rscm::ShrinkResult;
pub use scalars::{ScalarEstimates, SphericityMethod};
pub use scm::{ClassPanel, TaperTemplate};
pub use tabasco::TemplateSet;
pub use theory::MomentContext;
