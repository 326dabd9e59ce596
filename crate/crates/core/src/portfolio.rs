//! Global minimum-variance portfolios and a rolling out-of-sample backtest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;
use crate::multiclass::{linpool, LinpoolOptions};
use crate::rscm::rscm;
use crate::scalars::SphericityMethod;
use crate::scm::{scm, ClassPanel};
use crate::tabasco::{tabasco, TemplateSet, DEFAULT_MAX_BAND};

/// Daily net returns, one row per day and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    returns: DMatrix<f64>,
    assets: Vec<String>,
    dates: Option<Vec<String>>,
}

impl ReturnsPanel {
    pub fn new(returns: DMatrix<f64>, assets: Vec<String>, dates: Option<Vec<String>>) -> Result<Self> {
        if assets.len() != returns.ncols() {
            return Err(Error::DimensionMismatch {
                expected: returns.ncols(),
                got: assets.len(),
            });
        }
        if let Some(d) = &dates {
            if d.len() != returns.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: returns.nrows(),
                    got: d.len(),
                });
            }
        }
        for t in 0..returns.nrows() {
            for j in 0..returns.ncols() {
                let r = returns[(t, j)];
                if !r.is_finite() || r < -1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "return {r} at row {t}, column {j} is outside [-1, inf)"
                    )));
                }
            }
        }
        Ok(Self {
            returns,
            assets,
            dates,
        })
    }

    /// Panel with generated asset names `asset1, asset2, …`.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let assets = (1..=returns.ncols()).map(|j| format!("asset{j}")).collect();
        Self::new(returns, assets, None)
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    pub fn num_days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn num_assets(&self) -> usize {
        self.returns.ncols()
    }
}

/// `r_t = p_t / p_{t−1} − 1` for a `(T+1) × p` price matrix.
///
/// `dates`, if given, label the price rows; the returns keep the labels of
/// rows 1..=T.
pub fn net_returns(
    prices: &DMatrix<f64>,
    assets: Vec<String>,
    dates: Option<Vec<String>>,
) -> Result<ReturnsPanel> {
    let rows = prices.nrows();
    if rows < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: rows,
        });
    }
    let p = prices.ncols();
    let mut r = DMatrix::zeros(rows - 1, p);
    for t in 1..rows {
        for j in 0..p {
            let prev = prices[(t - 1, j)];
            if !(prev > 0.0) || !prices[(t, j)].is_finite() || prices[(t, j)] < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "price of asset {} at row {} must be positive and followed by a nonnegative price",
                    j,
                    t - 1
                )));
            }
            r[(t - 1, j)] = prices[(t, j)] / prev - 1.0;
        }
    }
    let dates = dates.map(|d| d.into_iter().skip(1).collect());
    ReturnsPanel::new(r, assets, dates)
}

/// `w = Σ⁻¹1 / (1ᵀΣ⁻¹1)`, renormalized so the weights sum to one.
pub fn gmvp_weights(sigma: &CovMatrix) -> Result<DVector<f64>> {
    if sigma.check_pd().is_err() {
        return Err(Error::Singular);
    }
    let p = sigma.dim();
    let chol = sigma.as_matrix().clone().cholesky().ok_or(Error::Singular)?;
    let mut w = chol.solve(&DVector::from_element(p, 1.0));
    let s = w.sum();
    if !(s.is_finite() && s != 0.0) {
        return Err(Error::Singular);
    }
    w /= s;
    let s = w.sum();
    w /= s;
    Ok(w)
}

/// Covariance estimator used inside each backtest window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Estimator {
    Scm,
    RscmEll1,
    RscmEll2,
    /// Banding grid `k = 1, …, min(p, max_band)` and `k = p`.
    Tabasco { max_band: usize },
    /// The training window is cut into `blocks` consecutive blocks treated
    /// as classes; the most recent block is the target class and the
    /// identity is added to the pool.
    Linpool { blocks: usize },
}

impl Estimator {
    pub fn name(&self) -> String {
        match self {
            Estimator::Scm => "scm".into(),
            Estimator::RscmEll1 => "rscm-ell1".into(),
            Estimator::RscmEll2 => "rscm-ell2".into(),
            Estimator::Tabasco { .. } => "tabasco".into(),
            Estimator::Linpool { .. } => "linpool".into(),
        }
    }

    pub fn tabasco_default() -> Self {
        Estimator::Tabasco {
            max_band: DEFAULT_MAX_BAND,
        }
    }

    /// Covariance estimate from the rows of `x`, with the shrinkage
    /// intensity and template index when the method has them.
    pub fn estimate(&self, x: &DMatrix<f64>) -> Result<(CovMatrix, Option<f64>, Option<usize>)> {
        match self {
            Estimator::Scm => Ok((scm(x)?, None, None)),
            Estimator::RscmEll1 => {
                let r = rscm(x, SphericityMethod::Ell1)?;
                Ok((r.estimate, Some(r.beta), None))
            }
            Estimator::RscmEll2 => {
                let r = rscm(x, SphericityMethod::Ell2)?;
                Ok((r.estimate, Some(r.beta), None))
            }
            Estimator::Tabasco { max_band } => {
                let p = x.ncols();
                let mut ks: Vec<usize> = (1..=p.min((*max_band).max(1))).collect();
                ks.push(p);
                let set = TemplateSet::banding(p, &ks)?;
                let r = tabasco(x, &set)?;
                Ok((r.estimate, Some(r.beta), r.template.map(|t| t.0)))
            }
            Estimator::Linpool { blocks } => {
                let n = x.nrows();
                let k = (*blocks).max(1);
                if n < 2 * k {
                    return Err(Error::InsufficientSamples {
                        required: 2 * k,
                        got: n,
                    });
                }
                let classes = (0..k)
                    .map(|b| {
                        let start = b * n / k;
                        let end = (b + 1) * n / k;
                        x.rows(start, end - start).into_owned()
                    })
                    .collect();
                let panel = ClassPanel::new(classes)?;
                let opts = LinpoolOptions {
                    identity_augment: true,
                    ..Default::default()
                };
                let (w, est) = linpool(&panel, &opts)?.pop().expect("k >= 1");
                Ok((est, Some(w.a[k - 1]), None))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Training window length `n`.
    pub window: usize,
    /// Days each weight vector is held.
    pub holding: usize,
    /// Multiplier turning daily standard deviation into annual risk.
    pub annualization: f64,
    pub estimator: Estimator,
}

impl BacktestConfig {
    pub fn new(window: usize, estimator: Estimator) -> Self {
        Self {
            window,
            holding: 20,
            annualization: 250f64.sqrt(),
            estimator,
        }
    }
}

/// One rebalancing step. Row indices are zero-based and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLog {
    pub window: usize,
    pub train_start: usize,
    pub train_end: usize,
    pub eval_start: usize,
    pub eval_end: usize,
    pub beta: Option<f64>,
    pub template: Option<usize>,
    pub weight_sum: f64,
    /// Set when the training data were constant and equal weights were used.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub estimator: String,
    pub realized_risk: f64,
    pub daily_returns: Vec<f64>,
    pub windows: Vec<WindowLog>,
}

/// Constant up to rounding of the column's own magnitude.
fn all_columns_constant(x: &DMatrix<f64>) -> bool {
    x.column_iter().all(|c| {
        let (lo, hi) = (c.min(), c.max());
        hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs())
    })
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = crate::matrix::compensated_sum(x.iter().copied()) / n;
    let ss = crate::matrix::compensated_sum(x.iter().map(|v| (v - mean) * (v - mean)));
    (ss / (n - 1.0)).sqrt()
}

/// Rolling backtest: at `t = n, n+h, …` estimate the covariance from rows
/// `t−n..t`, hold the GMVP for the next `h` days (the last period may be
/// shorter) and report the sample standard deviation of all out-of-sample
/// daily returns times the annualization factor.
///
/// When every training column is constant the covariance is zero and every
/// fully invested portfolio is a minimum-variance one; equal weights are used
/// and the window is flagged.
pub fn backtest(panel: &ReturnsPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let t_total = panel.num_days();
    let n = config.window;
    let h = config.holding;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("window {n} must be at least 2")));
    }
    if h == 0 {
        return Err(Error::InvalidParameter("holding period must be at least 1".into()));
    }
    if n + h > t_total {
        return Err(Error::InsufficientSamples {
            required: n + h,
            got: t_total,
        });
    }
    if t_total - n < 2 {
        return Err(Error::InsufficientSamples {
            required: n + 2,
            got: t_total,
        });
    }
    let r = panel.returns();
    let p = panel.num_assets();
    let mut daily = Vec::with_capacity(t_total - n);
    let mut windows = Vec::new();
    let mut t = n;
    while t < t_total {
        let idx = windows.len();
        let wrap = |e: Error| Error::Window {
            window: idx,
            source: Box::new(e),
        };
        let train = r.rows(t - n, n).into_owned();
        let end = (t + h).min(t_total);
        let (w, beta, template, degenerate) = if all_columns_constant(&train) {
            (DVector::from_element(p, 1.0 / p as f64), None, None, true)
        } else {
            let (est, beta, template) = config.estimator.estimate(&train).map_err(wrap)?;
            (gmvp_weights(&est).map_err(wrap)?, beta, template, false)
        };
        for day in t..end {
            daily.push(r.row(day).transpose().dot(&w));
        }
        windows.push(WindowLog {
            window: idx,
            train_start: t - n,
            train_end: t - 1,
            eval_start: t,
            eval_end: end - 1,
            beta,
            template,
            weight_sum: w.sum(),
            degenerate,
        });
        t = end;
    }
    Ok(BacktestReport {
        estimator: config.estimator.name(),
        realized_risk: sample_sd(&daily) * config.annualization,
        daily_returns: daily,
        windows,
    })
}
