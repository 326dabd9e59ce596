//! Shrinkage of the SCM toward a scaled identity, `βS + αI`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;
use crate::scalars::{
    ell2_from_scm, estimate_scale, estimate_sphericity_ell1, kurtosis_lenient, ScalarEstimates,
    SphericityMethod,
};
use crate::scm::scm;
use crate::theory::{nmse_scm, MomentContext};

/// Output of a single-sample shrinkage estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkResult {
    pub estimate: CovMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub scalars: ScalarEstimates,
    /// Label and position in the template set, for tapered estimators.
    pub template: Option<(usize, String)>,
    /// NMSE predicted by the plug-in scalars at the chosen coefficients.
    pub predicted_nmse: Option<f64>,
}

/// Summary of a [`ShrinkResult`] without the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkDiagnostics {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub sphericity: SphericityMethod,
    pub kappa_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_nmse: Option<f64>,
}

impl ShrinkResult {
    pub fn diagnostics(&self) -> ShrinkDiagnostics {
        ShrinkDiagnostics {
            alpha: self.alpha,
            beta: self.beta,
            eta: self.scalars.eta,
            kappa: self.scalars.kappa,
            gamma: self.scalars.gamma,
            sphericity: self.scalars.method,
            kappa_fallback: self.scalars.kappa_fallback,
            template_index: self.template.as_ref().map(|t| t.0),
            template: self.template.as_ref().map(|t| t.1.clone()),
            predicted_nmse: self.predicted_nmse,
        }
    }
}

/// MSE-optimal `(α₀, β₀)` for `βS + αI`:
/// `β₀ = (γ−1)/((γ−1) + γ·NMSE(S))`, `α₀ = (1−β₀)η`.
pub fn oracle_coeffs(gamma: f64, eta: f64, nmse: f64) -> Result<(f64, f64)> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("sphericity {gamma} must be >= 1")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!("scale {eta} must be positive")));
    }
    if !(nmse > 0.0) || !nmse.is_finite() {
        return Err(Error::InvalidParameter(format!("NMSE {nmse} must be positive")));
    }
    let beta = (gamma - 1.0) / ((gamma - 1.0) + gamma * nmse);
    Ok(((1.0 - beta) * eta, beta))
}

/// NMSE of the oracle estimator, `(1−β₀)(γ−1)/γ`.
pub fn oracle_nmse(gamma: f64, beta0: f64) -> f64 {
    (1.0 - beta0) * (gamma - 1.0) / gamma
}

/// Population oracle: returns `(α₀, β₀, NMSE)` for a known `Σ` and `κ`.
pub fn oracle_for(sigma: &CovMatrix, ctx: &MomentContext) -> Result<(f64, f64, f64)> {
    let gamma = sigma.sphericity();
    let nmse = nmse_scm(sigma.dim(), gamma, ctx);
    let (alpha, beta) = oracle_coeffs(gamma.max(1.0), sigma.scale(), nmse)?;
    Ok((alpha, beta, oracle_nmse(gamma.max(1.0), beta)))
}

/// `βS + αI`.
pub fn shrink(s: &CovMatrix, alpha: f64, beta: f64) -> CovMatrix {
    s.scaled(beta).add_diagonal(alpha)
}

/// Data-driven shrinkage with plug-in `η̂`, `κ̂` and `γ̂`.
///
/// `β̂` is clamped to `[0, 1]` and `α̂ = (1−β̂)η̂`, so `tr(M̂) = tr(S)`.
/// `κ̂` falls back to 0 when fewer than 4 samples are available or when it
/// would make the predicted NMSE nonpositive.
pub fn rscm(x: &DMatrix<f64>, method: SphericityMethod) -> Result<ShrinkResult> {
    let n = x.nrows();
    let p = x.ncols();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: n,
        });
    }
    let s = scm(x)?;
    let eta = estimate_scale(&s)?;
    let (mut kappa, mut fallback) = match kurtosis_lenient(x) {
        Some(k) => (k, false),
        None => (0.0, true),
    };
    let gamma_for = |kappa: f64| -> Result<f64> {
        match method {
            SphericityMethod::Ell1 => estimate_sphericity_ell1(x),
            SphericityMethod::Ell2 | SphericityMethod::Tapered => ell2_from_scm(&s, n, kappa),
        }
    };
    let mut gamma = gamma_for(kappa)?;
    let mut nmse = nmse_scm(p, gamma, &MomentContext::with_dim(n, kappa, p)?);
    if !(nmse > 0.0) {
        kappa = 0.0;
        fallback = true;
        gamma = gamma_for(0.0)?;
        nmse = nmse_scm(p, gamma, &MomentContext::new(n, 0.0)?);
    }
    let (_, beta) = oracle_coeffs(gamma, eta, nmse)?;
    let beta = beta.clamp(0.0, 1.0);
    let alpha = (1.0 - beta) * eta;
    Ok(ShrinkResult {
        estimate: shrink(&s, alpha, beta),
        alpha,
        beta,
        scalars: ScalarEstimates {
            eta,
            kappa,
            gamma,
            method,
            kappa_fallback: fallback,
        },
        template: None,
        predicted_nmse: Some(oracle_nmse(gamma, beta)),
    })
}
