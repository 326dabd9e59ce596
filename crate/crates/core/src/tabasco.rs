//! Tapered SCM shrunk toward a scaled identity, with the template chosen
//! from a finite set:
//! `M̂ = β (W∘S) + (1−β)(tr(S)/p) I`.
//!
//! The shrinkage intensity depends on the sphericity of `V∘Σ`, where
//! `V = √W` element-wise, while the estimate itself applies `W`. Keep the two
//! apart: [`TaperTemplate::sqrt_template`] gives the template whose
//! sphericity enters `β₀`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compensated_sum, CovMatrix};
use crate::rscm::ShrinkResult;
use crate::scalars::{estimate_scale, kurtosis_lenient, tapered_from_scm, ScalarEstimates, SphericityMethod};
use crate::scm::{scm, TaperTemplate};
use crate::theory::{expected_fro2_tapered, expected_tr2_scm, tapered_sphericity, MomentContext};

/// Largest bandwidth of the default grid besides `k = p`.
pub const DEFAULT_MAX_BAND: usize = 30;

/// Ordered, nonempty collection of templates sharing a dimension.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<TaperTemplate>,
    all_ones: Option<usize>,
}

impl TemplateSet {
    pub fn new(templates: Vec<TaperTemplate>) -> Result<Self> {
        let first = templates.first().ok_or(Error::EmptyTemplateSet)?;
        let p = first.dim();
        for t in &templates {
            if t.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: t.dim(),
                });
            }
        }
        let all_ones = templates.iter().position(|t| t.is_all_ones());
        Ok(Self {
            templates,
            all_ones,
        })
    }

    /// Banding templates for each bandwidth in `ks` (duplicates removed,
    /// order kept).
    pub fn banding(p: usize, ks: &[usize]) -> Result<Self> {
        Self::from_grid(p, ks, TaperTemplate::banding)
    }

    /// Linearly decaying tapers for each bandwidth in `ks`.
    pub fn linear_taper(p: usize, ks: &[usize]) -> Result<Self> {
        Self::from_grid(p, ks, TaperTemplate::linear_taper)
    }

    fn from_grid(
        p: usize,
        ks: &[usize],
        make: impl Fn(usize, usize) -> Result<TaperTemplate>,
    ) -> Result<Self> {
        let mut seen = Vec::new();
        for &k in ks {
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        Self::new(seen.into_iter().map(|k| make(p, k)).collect::<Result<_>>()?)
    }

    /// `band(k)` for `k = 1, …, min(p, 30)` and `k = p`.
    pub fn default_for(p: usize) -> Result<Self> {
        let mut ks: Vec<usize> = (1..=p.min(DEFAULT_MAX_BAND)).collect();
        ks.push(p);
        Self::banding(p, &ks)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.templates[0].dim()
    }

    pub fn templates(&self) -> &[TaperTemplate] {
        &self.templates
    }

    pub fn get(&self, i: usize) -> &TaperTemplate {
        &self.templates[i]
    }

    /// Index of the all-ones template, if the set contains one.
    pub fn all_ones_index(&self) -> Option<usize> {
        self.all_ones
    }
}

/// Evaluation of one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScore {
    pub index: usize,
    pub label: String,
    /// Unclamped `β₀(k)`.
    pub beta_raw: f64,
    /// `β₀(k)` clamped to `[0, 1]`.
    pub beta: f64,
    pub gamma_v: f64,
    /// `(β²D − 2βN)/(pη²)` at the clamped `β`, where `β₀ = N/D`. Equals
    /// `β₀(1 − γ_V)` whenever no clamping occurred.
    pub objective: f64,
}

/// Numerator `N = p(γ_V − 1)η²` and denominator `D = E‖W∘S‖² − E[tr(S)²]/p`
/// turned into a score.
fn score(index: usize, label: &str, num: f64, den: f64, scale2p: f64, gamma_v: f64, fixed: Option<f64>) -> TemplateScore {
    let beta_raw = if den > 0.0 { num / den } else { 0.0 };
    let beta = fixed.unwrap_or(beta_raw).clamp(0.0, 1.0);
    let objective = (beta * beta * den - 2.0 * beta * num) / scale2p;
    TemplateScore {
        index,
        label: label.to_string(),
        beta_raw,
        beta,
        gamma_v,
        objective,
    }
}

/// First index attaining the minimal objective; near-ties (relative
/// `1e-12`) go to the earlier template.
fn pick(scores: &[TemplateScore]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let b = scores[best].objective;
        if s.objective < b - 1e-12 * b.abs().max(1e-300) {
            best = i;
        }
    }
    best
}

fn population_score(
    index: usize,
    w: &TaperTemplate,
    sigma: &CovMatrix,
    ctx: &MomentContext,
) -> Result<TemplateScore> {
    let p = sigma.dim() as f64;
    let eta = sigma.scale();
    let gamma_v = tapered_sphericity(&w.sqrt_template(), sigma)?;
    let num = p * (gamma_v - 1.0) * eta * eta;
    let den = expected_fro2_tapered(w, sigma, ctx)? - expected_tr2_scm(sigma, ctx) / p;
    Ok(score(index, w.label(), num, den, p * eta * eta, gamma_v, None))
}

/// Oracle `β₀(k) = p(γ_V − 1)η² / (E‖W∘S‖²_F − E[tr(S)²]/p)`, clamped to `[0, 1]`.
pub fn oracle_beta(w: &TaperTemplate, sigma: &CovMatrix, ctx: &MomentContext) -> Result<f64> {
    Ok(population_score(0, w, sigma, ctx)?.beta)
}

/// Oracle scores of every template in the set.
pub fn oracle_scores(
    set: &TemplateSet,
    sigma: &CovMatrix,
    ctx: &MomentContext,
) -> Result<Vec<TemplateScore>> {
    set.templates
        .iter()
        .enumerate()
        .map(|(i, w)| population_score(i, w, sigma, ctx))
        .collect()
}

/// Oracle template choice: minimizes the score objective, ties broken toward
/// the earlier (sparser) template.
pub fn select_template(
    set: &TemplateSet,
    sigma: &CovMatrix,
    ctx: &MomentContext,
) -> Result<TemplateScore> {
    let scores = oracle_scores(set, sigma, ctx)?;
    Ok(scores[pick(&scores)].clone())
}

/// `E‖β(W∘S) + (1−β)(tr(S)/p)I − Σ‖²_F`.
pub fn tabasco_mse(beta: f64, w: &TaperTemplate, sigma: &CovMatrix, ctx: &MomentContext) -> Result<f64> {
    let p = sigma.dim() as f64;
    let t = sigma.trace();
    let etr2 = expected_tr2_scm(sigma, ctx);
    let den = expected_fro2_tapered(w, sigma, ctx)? - etr2 / p;
    let num = tapered_sphericity(&w.sqrt_template(), sigma)? * t * t / p - t * t / p;
    let base = etr2 / p - 2.0 * t * t / p + sigma.fro2();
    Ok(beta * beta * den - 2.0 * beta * num + base)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TabascoOptions {
    /// Use this intensity for every template instead of the estimated `β̂₀(k)`.
    pub fixed_beta: Option<f64>,
}

/// Data-driven estimator.
///
/// For each template, `β̂₀(k) = p(γ̂_V − 1)η̂² / (‖W∘S‖²_F − tr(S)²/p)`: the
/// denominator is the unbiased sample counterpart of `E‖W∘S‖² − E[tr(S)²]/p`
/// and `γ̂_V` comes from [`tapered_from_scm`] with the square-root template.
pub fn tabasco(x: &DMatrix<f64>, set: &TemplateSet) -> Result<ShrinkResult> {
    tabasco_with(x, set, TabascoOptions::default())
}

pub fn tabasco_with(x: &DMatrix<f64>, set: &TemplateSet, opts: TabascoOptions) -> Result<ShrinkResult> {
    Ok(tabasco_scored(x, set, opts)?.0)
}

/// [`tabasco_with`] also returning the per-template scores.
pub fn tabasco_scored(
    x: &DMatrix<f64>,
    set: &TemplateSet,
    opts: TabascoOptions,
) -> Result<(ShrinkResult, Vec<TemplateScore>)> {
    let n = x.nrows();
    let p = x.ncols();
    if set.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: set.dim(),
        });
    }
    if n < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: n,
        });
    }
    let s = scm(x)?;
    let eta = estimate_scale(&s)?;
    let (kappa, fallback) = match kurtosis_lenient(x) {
        Some(k) => (k, false),
        None => (0.0, true),
    };
    let pf = p as f64;
    let t = s.trace();
    let scores = set
        .templates
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let gamma_v = tapered_from_scm(&s, n, &w.sqrt_template(), kappa)?;
            let wf2 = compensated_sum(
                w.w().iter().zip(s.as_matrix().iter()).map(|(w, s)| (w * s) * (w * s)),
            );
            let num = pf * (gamma_v - 1.0) * eta * eta;
            let den = wf2 - t * t / pf;
            Ok(score(i, w.label(), num, den, pf * eta * eta, gamma_v, opts.fixed_beta))
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = &scores[pick(&scores)];
    let w = set.get(chosen.index);
    let beta = chosen.beta;
    let alpha = (1.0 - beta) * eta;
    let estimate = w.apply(&s).scaled(beta).add_diagonal(alpha);
    let result = ShrinkResult {
        estimate,
        alpha,
        beta,
        scalars: ScalarEstimates {
            eta,
            kappa,
            gamma: chosen.gamma_v,
            method: SphericityMethod::Tapered,
            kappa_fallback: fallback,
        },
        template: Some((chosen.index, chosen.label.clone())),
        predicted_nmse: None,
    };
    Ok((result, scores))
}
