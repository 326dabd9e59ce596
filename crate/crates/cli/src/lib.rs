//! Command-line front end of `shrinkcov`: CSV ingestion, Monte Carlo
//! experiments, single-shot estimation and portfolio backtests.

use serde::{Deserialize, Serialize};

pub mod backtest;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod ingest;
pub mod output;
pub mod simulate;
pub mod spec;

pub use error::{CliError, Result};

/// Estimators selectable with `--method`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[value(name = "scm")]
    Scm,
    #[value(name = "rscm-ell1")]
    RscmEll1,
    #[value(name = "rscm-ell2")]
    RscmEll2,
    #[value(name = "tabasco")]
    Tabasco,
    #[value(name = "coupled")]
    Coupled,
    #[value(name = "linpool")]
    Linpool,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Scm => "scm",
            Method::RscmEll1 => "rscm-ell1",
            Method::RscmEll2 => "rscm-ell2",
            Method::Tabasco => "tabasco",
            Method::Coupled => "coupled",
            Method::Linpool => "linpool",
        }
    }

    /// Needs samples from several populations.
    pub fn is_multiclass(&self) -> bool {
        matches!(self, Method::Coupled | Method::Linpool)
    }
}
