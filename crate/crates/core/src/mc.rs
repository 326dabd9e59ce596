//! Seeded Monte Carlo runner.
//!
//! Trial `i` draws from its own stream `trial_rng(seed, i)`, trials run on a
//! rayon pool and the per-trial statistics are summed in trial order, so the
//! result does not depend on the number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::compensated_sum;
use crate::models::{trial_rng, SimRng};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SHRINKCOV_THREADS";

/// Mean and standard error of each statistic over the trials.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl McSummary {
    /// `|mean_i − expected| / se_i`.
    pub fn z_score(&self, i: usize, expected: f64) -> f64 {
        (self.mean[i] - expected).abs() / self.se[i]
    }
}

/// Worker count from `SHRINKCOV_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Runs `trials` independent trials of `f`, each returning the same number
/// of statistics.
pub fn run<F>(trials: usize, seed: u64, f: F) -> Result<McSummary>
where
    F: Fn(&mut SimRng) -> Result<Vec<f64>> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    let work = || -> Result<Vec<Vec<f64>>> {
        (0..trials)
            .into_par_iter()
            .map(|i| f(&mut trial_rng(seed, i as u64)))
            .collect()
    };
    let rows = match threads_from_env() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    summarize(&rows)
}

/// Mean and standard error of each column of `rows`.
pub fn summarize(rows: &[Vec<f64>]) -> Result<McSummary> {
    let trials = rows.len();
    if trials == 0 {
        return Err(Error::InvalidParameter("trial count must be at least 1".into()));
    }
    let m = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: r.len(),
        });
    }
    let nt = trials as f64;
    let mut mean = Vec::with_capacity(m);
    let mut se = Vec::with_capacity(m);
    for j in 0..m {
        let mu = compensated_sum(rows.iter().map(|r| r[j])) / nt;
        let ss = compensated_sum(rows.iter().map(|r| (r[j] - mu) * (r[j] - mu)));
        mean.push(mu);
        se.push(if trials > 1 {
            (ss / (nt - 1.0) / nt).sqrt()
        } else {
            f64::NAN
        });
    }
    Ok(McSummary { trials, mean, se })
}
