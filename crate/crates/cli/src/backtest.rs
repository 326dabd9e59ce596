//! Rolling GMVP backtests for several estimators on one returns panel.

use shrinkcov::portfolio::{backtest, BacktestReport};
use shrinkcov::{BacktestConfig, Estimator, ReturnsPanel};

use crate::error::{CliError, Result};
use crate::output::{Cell, Table};
use crate::Method;

pub const BACKTEST_DEFAULT: [Method; 3] = [Method::RscmEll1, Method::RscmEll2, Method::Tabasco];

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOptions {
    pub methods: Vec<Method>,
    pub window: usize,
    pub holding: usize,
    /// Periods per year; the daily standard deviation is multiplied by its
    /// square root.
    pub annualize: f64,
    /// Blocks of the training window used as classes by `linpool`.
    pub blocks: usize,
}

pub fn estimator_for(method: Method, blocks: usize) -> Result<Estimator> {
    Ok(match method {
        Method::Scm => Estimator::Scm,
        Method::RscmEll1 => Estimator::RscmEll1,
        Method::RscmEll2 => Estimator::RscmEll2,
        Method::Tabasco => Estimator::tabasco_default(),
        Method::Linpool => Estimator::Linpool { blocks },
        Method::Coupled => {
            return Err(CliError::Usage(
                "method coupled is not available for backtests; valid: scm, rscm-ell1, rscm-ell2, tabasco, linpool"
                    .into(),
            ))
        }
    })
}

pub fn run(panel: &ReturnsPanel, opts: &BacktestOptions) -> Result<(Table, Vec<BacktestReport>)> {
    if !(opts.annualize > 0.0 && opts.annualize.is_finite()) {
        return Err(CliError::Usage(format!("--annualize must be positive, got {}", opts.annualize)));
    }
    let methods = if opts.methods.is_empty() {
        BACKTEST_DEFAULT.to_vec()
    } else {
        opts.methods.clone()
    };
    let mut reports = Vec::with_capacity(methods.len());
    for m in &methods {
        let config = BacktestConfig {
            window: opts.window,
            holding: opts.holding,
            annualization: opts.annualize.sqrt(),
            estimator: estimator_for(*m, opts.blocks)?,
        };
        let rep = backtest(panel, &config).map_err(|e| CliError::Input {
            source_name: m.name().into(),
            message: e.to_string(),
        })?;
        reports.push(rep);
    }
    let mut t = Table::new(&["method", "realized_risk", "windows", "days", "mean_beta", "degenerate_windows"]);
    for (m, r) in methods.iter().zip(&reports) {
        let betas: Vec<f64> = r.windows.iter().filter_map(|w| w.beta).collect();
        let mean_beta = (!betas.is_empty()).then(|| betas.iter().sum::<f64>() / betas.len() as f64);
        t.push(vec![
            m.name().into(),
            r.realized_risk.into(),
            r.windows.len().into(),
            r.daily_returns.len().into(),
            mean_beta.into(),
            r.windows.iter().filter(|w| w.degenerate).count().into(),
        ]);
    }
    t.summary.insert("window".into(), opts.window.into());
    t.summary.insert("holding".into(), opts.holding.into());
    t.summary.insert("annualization".into(), opts.annualize.sqrt().into());
    Ok((t, reports))
}

/// Out-of-sample daily returns, one column per method, dated when the
/// panel is.
pub fn daily_returns_table(panel: &ReturnsPanel, window: usize, reports: &[BacktestReport]) -> Table {
    let mut cols = vec!["date"];
    cols.extend(reports.iter().map(|r| r.estimator.as_str()));
    let mut t = Table::new(&cols);
    let days = reports.first().map_or(0, |r| r.daily_returns.len());
    for i in 0..days {
        let day = window + i;
        let mut row = vec![match panel.dates() {
            Some(d) => Cell::Text(d[day].clone()),
            None => Cell::Int(day),
        }];
        row.extend(reports.iter().map(|r| Cell::Num(r.daily_returns[i])));
        t.push(row);
    }
    t
}
