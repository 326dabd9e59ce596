use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shrinkcov_cli::backtest::{self, BacktestOptions};
use shrinkcov_cli::estimate::{estimate, EstimateOptions};
use shrinkcov_cli::ingest::{panel_from_table, read_table, IngestOptions};
use shrinkcov_cli::output::{matrix_csv, write_file, Format};
use shrinkcov_cli::simulate::simulate;
use shrinkcov_cli::spec::{preset_text, ExperimentSpec, Overrides, PRESETS};
use shrinkcov_cli::{CliError, Method, Result};

/// Shrinkage covariance estimation: simulations, estimates and backtests.
///
/// Monte Carlo trials run in parallel; set SHRINKCOV_THREADS to cap the
/// number of worker threads. Results do not depend on it.
#[derive(Parser)]
#[command(name = "shrinkcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and print theory next to empirical means.
    Simulate(SimulateArgs),
    /// Estimate covariance matrices from CSV files of observations.
    Estimate(EstimateArgs),
    /// Rolling minimum-variance portfolio backtest.
    Backtest(BacktestArgs),
    /// List the bundled presets, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct SimulateArgs {
    /// Bundled experiment (see `shrinkcov presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment spec in TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    /// Sample sizes, e.g. `20,50` or `2-197/5`.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Estimators to compare (repeatable or comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<Method>,
    /// Template grid, e.g. `band:1-30,p` or `taper:2-250/2`.
    #[arg(long)]
    template_grid: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the table here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Drop asset columns with missing values instead of failing.
    #[arg(long)]
    drop_incomplete: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observations, one row per sample; repeat for several classes.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    template_grid: Option<String>,
    /// Add the identity to the linear pool.
    #[arg(long)]
    identity: bool,
    #[command(flatten)]
    ingest: IngestArgs,
    /// Directory for the estimate CSV files and diagnostics.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BacktestArgs {
    /// Daily returns (or prices with --prices), one column per asset.
    #[arg(long)]
    input: PathBuf,
    /// The input holds prices; convert to net returns first.
    #[arg(long)]
    prices: bool,
    #[command(flatten)]
    ingest: IngestArgs,
    /// Use only these asset columns (comma separated).
    #[arg(long, value_delimiter = ',')]
    assets: Vec<String>,
    /// Estimators (default: rscm-ell1, rscm-ell2, tabasco).
    #[arg(long, value_enum, value_delimiter = ',')]
    method: Vec<Method>,
    /// Training window length in days.
    #[arg(long)]
    window: usize,
    /// Days each portfolio is held before rebalancing.
    #[arg(long, default_value_t = 20)]
    holding: usize,
    /// Periods per year; risk is the daily standard deviation times its square root.
    #[arg(long, default_value_t = 250.0)]
    annualize: f64,
    /// Blocks of the training window used as classes by linpool.
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Directory for backtest.json and daily_returns.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.config) {
        (Some(name), _) => ExperimentSpec::preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentSpec::from_toml(&text)?
        }
        (None, None) => ExperimentSpec::compare_default(),
    };
    spec.apply(&Overrides {
        p: a.p,
        n: a.n,
        trials: a.trials,
        seed: a.seed,
        methods: a.method,
        templates: a.template_grid,
    })?;
    let table = simulate(&spec)?;
    emit(&table.render(a.format)?, a.output.as_deref())
}

fn labels(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let unique: HashSet<&String> = stems.iter().collect();
    if unique.len() == stems.len() {
        stems
    } else {
        stems.iter().enumerate().map(|(k, s)| format!("{s}{}", k + 1)).collect()
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let opts = IngestOptions {
        drop_incomplete: a.ingest.drop_incomplete,
    };
    let names = labels(&a.input);
    let inputs = a
        .input
        .iter()
        .zip(names)
        .map(|(p, l)| Ok((l, read_table(p, opts)?)))
        .collect::<Result<Vec<_>>>()?;
    let (estimates, report) = estimate(
        &inputs,
        &EstimateOptions {
            method: a.method,
            templates: a.template_grid,
            identity: a.identity,
        },
    )?;
    for (est, class) in estimates.iter().zip(&report.classes) {
        let file = if estimates.len() == 1 {
            "estimate.csv".to_string()
        } else {
            format!("estimate_{}.csv", class.label)
        };
        write_file(&a.out_dir.join(file), &matrix_csv(est.as_matrix()))?;
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    write_file(&a.out_dir.join("diagnostics.json"), &json)?;
    emit(&json, None)
}

fn cmd_backtest(a: BacktestArgs) -> Result<()> {
    let source = a.input.display().to_string();
    let mut table = read_table(
        &a.input,
        IngestOptions {
            drop_incomplete: a.ingest.drop_incomplete,
        },
    )?;
    if !a.assets.is_empty() {
        table = table.select(&a.assets, &source)?;
    }
    let (panel, dropped) = panel_from_table(table, a.prices, &source)?;
    let opts = BacktestOptions {
        methods: a.method,
        window: a.window,
        holding: a.holding,
        annualize: a.annualize,
        blocks: a.blocks,
    };
    let (mut summary, reports) = backtest::run(&panel, &opts)?;
    if !dropped.is_empty() {
        summary.summary.insert("dropped_columns".into(), dropped.join(",").into());
    }
    if let Some(dir) = &a.out_dir {
        let json = serde_json::to_string_pretty(&serde_json::json!({
            "assets": panel.assets(),
            "window": opts.window,
            "holding": opts.holding,
            "annualization": opts.annualize.sqrt(),
            "reports": reports,
        }))? + "\n";
        write_file(&dir.join("backtest.json"), &json)?;
        let daily = backtest::daily_returns_table(&panel, opts.window, &reports);
        write_file(&dir.join("daily_returns.csv"), &daily.to_csv()?)?;
    }
    emit(&summary.render(a.format)?, None)
}

fn cmd_presets(name: Option<String>) -> Result<()> {
    match name {
        Some(n) => emit(preset_text(&n)?, None),
        None => emit(&(PRESETS.map(|(n, _)| n).join("\n") + "\n"), None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Presets { name } => cmd_presets(name),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
