//! One-shot estimation from observation files.

use nalgebra::DMatrix;
use serde::Serialize;
use shrinkcov::multiclass::{coupled_plugin, estimate_class_scalars, linpool, LinpoolOptions};
use shrinkcov::rscm::{rscm, ShrinkResult};
use shrinkcov::scalars::{ell2_from_scm, estimate_kurtosis};
use shrinkcov::scm::scm;
use shrinkcov::tabasco::tabasco;
use shrinkcov::{ClassPanel, CovMatrix, SphericityMethod, TemplateSet};

use crate::error::{CliError, Result};
use crate::grid::{bandwidth, parse_template_grid};
use crate::ingest::Table;
use crate::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub method: Method,
    /// Template grid for TABASCO; `band:1-30,p` style.
    pub templates: Option<String>,
    /// Add the identity to the linear pool.
    pub identity: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ClassDiagnostics {
    pub label: String,
    pub n: usize,
    pub eta: f64,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_nmse: Option<f64>,
    /// Pooling weights of the class SCMs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: String,
    pub p: usize,
    pub columns: Vec<String>,
    pub classes: Vec<ClassDiagnostics>,
}

fn from_shrink(label: &str, n: usize, r: &ShrinkResult) -> ClassDiagnostics {
    ClassDiagnostics {
        label: label.into(),
        n,
        eta: r.scalars.eta,
        kappa: Some(r.scalars.kappa),
        gamma: Some(r.scalars.gamma),
        alpha: Some(r.alpha),
        beta: Some(r.beta),
        predicted_nmse: r.predicted_nmse,
        ..Default::default()
    }
}

/// Estimates for every input. Single-sample methods treat the inputs
/// independently; `coupled` and `linpool` treat them as classes sharing
/// the same columns.
pub fn estimate(inputs: &[(String, Table)], opts: &EstimateOptions) -> Result<(Vec<CovMatrix>, EstimateReport)> {
    let (first_label, first) = inputs
        .first()
        .ok_or_else(|| CliError::Usage("at least one --input is required".into()))?;
    for (label, t) in &inputs[1..] {
        if t.columns != first.columns {
            return Err(CliError::Input {
                source_name: label.clone(),
                message: format!("columns differ from those of {first_label}"),
            });
        }
    }
    let p = first.columns.len();
    let mut report = EstimateReport {
        method: opts.method.name().into(),
        p,
        columns: first.columns.clone(),
        classes: Vec::with_capacity(inputs.len()),
    };
    let mut out = Vec::with_capacity(inputs.len());
    if opts.method.is_multiclass() {
        if inputs.len() < 2 {
            return Err(CliError::Usage(format!(
                "method {} needs at least two --input files, one per class",
                opts.method.name()
            )));
        }
        let panel = ClassPanel::with_labels(
            inputs.iter().map(|(_, t)| t.data.clone()).collect(),
            inputs.iter().map(|(l, _)| l.clone()).collect(),
        )?;
        let sc = estimate_class_scalars(&panel)?;
        let base = |k: usize| ClassDiagnostics {
            label: inputs[k].0.clone(),
            n: sc.n[k],
            eta: sc.eta[k],
            kappa: Some(sc.kappa[k]),
            gamma: Some(sc.gamma[k]),
            ..Default::default()
        };
        if opts.method == Method::Coupled {
            for r in coupled_plugin(&panel)? {
                report.classes.push(ClassDiagnostics {
                    alpha: Some(r.alpha),
                    beta: Some(r.beta),
                    ..base(r.class)
                });
                out.push(r.estimate);
            }
        } else {
            let lp = LinpoolOptions {
                identity_augment: opts.identity,
                ..Default::default()
            };
            for (k, (w, est)) in linpool(&panel, &lp)?.into_iter().enumerate() {
                report.classes.push(ClassDiagnostics {
                    weights: Some(w.a.clone()),
                    identity_weight: w.identity,
                    ..base(k)
                });
                out.push(est);
            }
        }
        return Ok((out, report));
    }
    let set: Option<TemplateSet> = match (opts.method, &opts.templates) {
        (Method::Tabasco, Some(g)) => Some(parse_template_grid(g, p)?),
        (Method::Tabasco, None) => Some(TemplateSet::default_for(p)?),
        _ => None,
    };
    for (label, t) in inputs {
        let x: &DMatrix<f64> = &t.data;
        let n = x.nrows();
        let (est, diag) = match opts.method {
            Method::RscmEll1 | Method::RscmEll2 => {
                let sph = if opts.method == Method::RscmEll1 {
                    SphericityMethod::Ell1
                } else {
                    SphericityMethod::Ell2
                };
                let r = rscm(x, sph)?;
                let d = from_shrink(label, n, &r);
                (r.estimate, d)
            }
            Method::Tabasco => {
                let set = set.as_ref().expect("built above");
                let r = tabasco(x, set)?;
                let mut d = from_shrink(label, n, &r);
                if let Some((i, name)) = &r.template {
                    d.template_index = Some(*i);
                    d.template = Some(name.clone());
                    d.bandwidth = bandwidth(set.get(*i));
                }
                (r.estimate, d)
            }
            _ => {
                let s = scm(x)?;
                let kappa = estimate_kurtosis(x).ok();
                let gamma = ell2_from_scm(&s, n, kappa.unwrap_or(0.0)).ok();
                let d = ClassDiagnostics {
                    label: label.clone(),
                    n,
                    eta: s.scale(),
                    kappa,
                    gamma,
                    ..Default::default()
                };
                (s, d)
            }
        };
        report.classes.push(diag);
        out.push(est);
    }
    Ok((out, report))
}
