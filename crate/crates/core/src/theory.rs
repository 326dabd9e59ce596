//! Exact finite-sample moments of the SCM and of tapered SCMs under
//! elliptical sampling, and the MSE expressions built from them.
//!
//! Everything here takes the elliptical kurtosis `κ` explicitly so the same
//! code serves both population oracles and plug-in estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compensated_sum, CovMatrix};
use crate::scm::TaperTemplate;

/// Sample size and kurtosis together with the derived scalars
/// `τ1 = 1/(n−1) + κ/n` and `τ2 = κ/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentContext {
    n: usize,
    kappa: f64,
    tau1: f64,
    tau2: f64,
}

impl MomentContext {
    /// Requires `n ≥ 2` and `κ > −2/3`, the elliptical lower bound at `p = 1`.
    pub fn new(n: usize, kappa: f64) -> Result<Self> {
        Self::build(n, kappa, -2.0 / 3.0)
    }

    /// As [`MomentContext::new`] with the dimension-specific bound `κ > −2/(p+2)`.
    pub fn with_dim(n: usize, kappa: f64, p: usize) -> Result<Self> {
        Self::build(n, kappa, kappa_lower_bound(p))
    }

    fn build(n: usize, kappa: f64, bound: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                got: n,
            });
        }
        if !kappa.is_finite() || kappa <= bound {
            return Err(Error::InvalidParameter(format!(
                "kurtosis {kappa} must exceed {bound}"
            )));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            kappa,
            tau1: 1.0 / (nf - 1.0) + kappa / nf,
            tau2: kappa / nf,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }
}

/// Lower bound `−2/(p+2)` of the elliptical kurtosis in dimension `p`.
pub fn kappa_lower_bound(p: usize) -> f64 {
    -2.0 / (p as f64 + 2.0)
}

/// `E‖S‖²_F = (1+τ1+τ2)‖Σ‖²_F + τ1 tr(Σ)²`.
pub fn expected_fro2_scm(sigma: &CovMatrix, ctx: &MomentContext) -> f64 {
    let t = sigma.trace();
    (1.0 + ctx.tau1 + ctx.tau2) * sigma.fro2() + ctx.tau1 * t * t
}

/// `E[tr(S)²] = 2τ1‖Σ‖²_F + (1+τ2) tr(Σ)²`.
pub fn expected_tr2_scm(sigma: &CovMatrix, ctx: &MomentContext) -> f64 {
    let t = sigma.trace();
    2.0 * ctx.tau1 * sigma.fro2() + (1.0 + ctx.tau2) * t * t
}

/// `var(tr S) = 2τ1‖Σ‖²_F + τ2 tr(Σ)²`.
pub fn var_trace_scm(sigma: &CovMatrix, ctx: &MomentContext) -> f64 {
    let t = sigma.trace();
    2.0 * ctx.tau1 * sigma.fro2() + ctx.tau2 * t * t
}

/// `E‖S − Σ‖²_F`.
pub fn mse_scm(sigma: &CovMatrix, ctx: &MomentContext) -> f64 {
    let t = sigma.trace();
    (ctx.tau1 + ctx.tau2) * sigma.fro2() + ctx.tau1 * t * t
}

/// `NMSE(S) = (1 + p/γ) τ1 + τ2`.
pub fn nmse_scm(p: usize, gamma: f64, ctx: &MomentContext) -> f64 {
    (1.0 + p as f64 / gamma) * ctx.tau1 + ctx.tau2
}

/// Limit of `NMSE(S)` as `n, p → ∞` with `p/n → c₀` and `γ → γ₀`.
pub fn limiting_nmse(c0: f64, gamma0: f64, kappa: f64) -> f64 {
    (1.0 + kappa) * c0 / gamma0
}

fn check_dims(w: &TaperTemplate, sigma: &CovMatrix) -> Result<()> {
    if w.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            got: w.dim(),
        });
    }
    Ok(())
}

/// `‖A ∘ Σ‖²_F` for a weight matrix `A`.
fn weighted_fro2(a: &nalgebra::DMatrix<f64>, sigma: &CovMatrix) -> f64 {
    compensated_sum(
        a.iter()
            .zip(sigma.as_matrix().iter())
            .map(|(w, s)| (w * s) * (w * s)),
    )
}

/// `tr((D_Σ W)²) = Σ_ij w_ij² σ_ii σ_jj`.
fn diag_weighted_term(w: &TaperTemplate, sigma: &CovMatrix) -> f64 {
    let d = sigma.diagonal();
    let p = d.len();
    let wm = w.w();
    compensated_sum((0..p).flat_map(|j| {
        let d = &d;
        (0..p).map(move |i| {
            let wij = wm[(i, j)];
            wij * wij * d[i] * d[j]
        })
    }))
}

/// `E‖W∘S‖²_F = (1+τ1+τ2)‖W∘Σ‖²_F + τ1 tr((D_Σ W)²)`.
pub fn expected_fro2_tapered(
    w: &TaperTemplate,
    sigma: &CovMatrix,
    ctx: &MomentContext,
) -> Result<f64> {
    check_dims(w, sigma)?;
    Ok((1.0 + ctx.tau1 + ctx.tau2) * weighted_fro2(w.w(), sigma)
        + ctx.tau1 * diag_weighted_term(w, sigma))
}

/// `E‖W∘S − Σ‖²_F = E‖W∘S‖²_F + ‖Σ‖²_F − 2‖V∘Σ‖²_F` with `V = √W`.
pub fn mse_tapered(w: &TaperTemplate, sigma: &CovMatrix, ctx: &MomentContext) -> Result<f64> {
    let e = expected_fro2_tapered(w, sigma, ctx)?;
    Ok(e + sigma.fro2() - 2.0 * weighted_fro2(w.v(), sigma))
}

pub fn nmse_tapered(w: &TaperTemplate, sigma: &CovMatrix, ctx: &MomentContext) -> Result<f64> {
    Ok(mse_tapered(w, sigma, ctx)? / sigma.fro2())
}

/// Sphericity of the tapered covariance, `p‖W∘Σ‖²_F / tr(Σ)²`.
///
/// Pass `w.sqrt_template()` to obtain `γ_V`.
pub fn tapered_sphericity(w: &TaperTemplate, sigma: &CovMatrix) -> Result<f64> {
    check_dims(w, sigma)?;
    let t = sigma.trace();
    Ok(sigma.dim() as f64 * weighted_fro2(w.w(), sigma) / (t * t))
}

/// `var(s²) = σ⁴ (kurt/n + 2/(n−1))` for the unbiased sample variance.
pub fn var_sample_variance(sigma2: f64, kurt: f64, n: usize) -> f64 {
    let nf = n as f64;
    sigma2 * sigma2 * (kurt / nf + 2.0 / (nf - 1.0))
}

/// MSE-optimal scaling `β₀ = n(n−1) / (kurt(n−1) + n(n+1))` of `s²`.
pub fn beta0_1d(kurt: f64, n: usize) -> f64 {
    let nf = n as f64;
    nf * (nf - 1.0) / (kurt * (nf - 1.0) + nf * (nf + 1.0))
}

/// Bias-variance split of `E[(β s² − σ²)²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledVarianceMse {
    pub beta: f64,
    pub mse: f64,
    pub bias2: f64,
    pub var: f64,
}

pub fn scaled_variance_mse(beta: f64, sigma2: f64, kurt: f64, n: usize) -> ScaledVarianceMse {
    let var = beta * beta * var_sample_variance(sigma2, kurt, n);
    let bias2 = (1.0 - beta) * (1.0 - beta) * sigma2 * sigma2;
    ScaledVarianceMse {
        beta,
        mse: var + bias2,
        bias2,
        var,
    }
}

/// `E‖βS + αI − Σ‖²_F = β² E‖S − Σ‖²_F + ‖βΣ + αI − Σ‖²_F`.
///
/// The deterministic term is taken with `E[S] = Σ` substituted, which is the
/// only reading under which the bias-variance split holds.
pub fn rscm_mse(alpha: f64, beta: f64, sigma: &CovMatrix, ctx: &MomentContext) -> f64 {
    let p = sigma.dim() as f64;
    let b1 = beta - 1.0;
    let bias = b1 * b1 * sigma.fro2() + 2.0 * alpha * b1 * sigma.trace() + alpha * alpha * p;
    beta * beta * mse_scm(sigma, ctx) + bias
}

/// The same surface normalized by `‖Σ‖²_F`, written in `(γ, η, NMSE(S))`.
pub fn rscm_nmse_surface(alpha: f64, beta: f64, gamma: f64, eta: f64, nmse: f64) -> f64 {
    let b1 = beta - 1.0;
    beta * beta * nmse + b1 * b1 + 2.0 * alpha * b1 / (eta * gamma)
        + alpha * alpha / (eta * eta * gamma)
}
