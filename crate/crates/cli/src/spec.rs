//! Experiment specifications, read from TOML, and the bundled presets.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use shrinkcov::models::{ar1_cov, cai_cov};
use shrinkcov::{CovMatrix, Family};

use crate::error::{CliError, Result};
use crate::grid::{IntList, RealList};
use crate::Method;

pub const PRESETS: [(&str, &str); 4] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("setupA", include_str!("../presets/setupA.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// `β s²` for univariate samples: MSE, squared bias and variance.
    ScaledVariance,
    /// NMSE of the tapered SCM for every template of a grid.
    Tapered,
    /// NMSE of the SCM and of the oracle `βS + αI`.
    RscmOracle,
    /// Coupled multi-class estimator on an `(α, β)` grid.
    Coupled,
    /// Data-driven estimators side by side.
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    #[default]
    Gaussian,
    T { dof: f64 },
}

impl Distribution {
    pub fn family(&self) -> Family {
        match *self {
            Distribution::Gaussian => Family::Gaussian,
            Distribution::T { dof } => Family::StudentT { dof },
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Model {
    #[default]
    Identity,
    Ar1 {
        rho: f64,
        #[serde(default = "one")]
        eta: f64,
    },
    Cai { rho: f64, alpha: f64 },
    /// Headerless CSV holding a `p × p` covariance matrix.
    File { path: PathBuf },
}

impl Model {
    pub fn covariance(&self, p: usize) -> Result<CovMatrix> {
        let sigma = match self {
            Model::Identity => CovMatrix::identity(p),
            Model::Ar1 { rho, eta } => ar1_cov(*eta, *rho, p)?,
            Model::Cai { rho, alpha } => cai_cov(*rho, *alpha, p)?,
            Model::File { path } => {
                let m = read_matrix(path)?;
                if m.nrows() != p {
                    return Err(CliError::Spec(format!(
                        "{} holds a {}×{} matrix but p = {p}",
                        path.display(),
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let sigma = CovMatrix::new(m)?;
                sigma.check_pd()?;
                sigma
            }
        };
        Ok(sigma)
    }
}

/// Square matrix from headerless CSV.
pub fn read_matrix(path: &std::path::Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let name = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Schema {
                source_name: name.clone(),
                line: i + 1,
                message: "non-numeric matrix entry".into(),
            })?;
        rows.push(row);
    }
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(CliError::Input {
            source_name: name,
            message: "expected a nonempty square matrix".into(),
        });
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// One simulation experiment. Fields a kind does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: Kind,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub distribution: Distribution,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub p: Option<usize>,
    /// Sample sizes; per class for `coupled`.
    pub n: IntList,
    #[serde(default)]
    pub beta: Option<RealList>,
    #[serde(default)]
    pub alpha: Option<RealList>,
    /// AR(1) models with these sphericities replace `model` (`rscm-oracle`).
    #[serde(default)]
    pub sphericity: Option<RealList>,
    /// Template grid, e.g. `band:1-30,p`.
    #[serde(default)]
    pub templates: Option<String>,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// AR(1) correlation of each class (`coupled`).
    #[serde(default)]
    pub class_rho: Option<Vec<f64>>,
    /// Zero-based target class (`coupled`); the last class by default.
    #[serde(default)]
    pub class: Option<usize>,
}

/// Command-line values that replace spec fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub p: Option<usize>,
    pub n: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Vec<Method>,
    pub templates: Option<String>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| CliError::Spec(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name)?;
        Self::from_toml(text)
    }

    /// Plain comparison of data-driven estimators, the default when no
    /// preset or config file is given.
    pub fn compare_default() -> Self {
        Self {
            name: None,
            kind: Kind::Compare,
            trials: 100,
            seed: 0,
            distribution: Distribution::Gaussian,
            model: Model::Ar1 { rho: 0.5, eta: 1.0 },
            p: Some(50),
            n: IntList::Values(vec![25, 50, 100]),
            beta: None,
            alpha: None,
            sphericity: None,
            templates: None,
            methods: None,
            class_rho: None,
            class: None,
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = o.p {
            self.p = Some(p);
        }
        if let Some(n) = &o.n {
            self.n = IntList::Spec(n.clone());
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if !o.methods.is_empty() {
            self.methods = Some(o.methods.clone());
        }
        if let Some(t) = &o.templates {
            self.templates = Some(t.clone());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        if self.kind != Kind::ScaledVariance && self.p.map_or(true, |p| p == 0) {
            return Err(CliError::Spec("p must be set to a positive value".into()));
        }
        if let Some(m) = &self.methods {
            if m.is_empty() {
                return Err(CliError::Spec("methods is empty".into()));
            }
        }
        Ok(())
    }
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset '{name}'; valid: {}",
                PRESETS.map(|(n, _)| n).join(", ")
            ))
        })
}
