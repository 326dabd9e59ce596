//! Data-driven estimates of scale, elliptical kurtosis and sphericity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compensated_sum, CovMatrix};
use crate::scm::{scm, sscm_counted, TaperTemplate};
use crate::theory::{kappa_lower_bound, MomentContext};

/// Offset above the elliptical lower bound used when clamping `κ̂`.
pub const KAPPA_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphericityMethod {
    /// Spatial sign covariance based estimator.
    Ell1,
    /// SCM based estimator with kurtosis correction.
    Ell2,
    /// Ell2-type estimator of a tapered sphericity.
    Tapered,
}

/// Plug-in scalars feeding a shrinkage rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimates {
    pub eta: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub method: SphericityMethod,
    /// Set when `κ̂` was replaced by 0 because the sample was too small or
    /// the kurtosis-corrected NMSE came out nonpositive.
    pub kappa_fallback: bool,
}

/// `η̂ = tr(S)/p`.
pub fn estimate_scale(s: &CovMatrix) -> Result<f64> {
    let eta = s.scale();
    if eta > 0.0 && eta.is_finite() {
        Ok(eta)
    } else {
        Err(Error::ZeroVariance)
    }
}

/// Per-coordinate sample excess kurtosis `m4/m2² − 3`; `None` for a
/// coordinate without spread.
fn coordinate_excess_kurtosis(x: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let mean = compensated_sum(col.iter().copied()) / n;
            let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let m2 = compensated_sum(col.iter().map(|v| (v - mean).powi(2))) / n;
            if m2 <= (f64::EPSILON * scale).powi(2) || m2 == 0.0 {
                return None;
            }
            let m4 = compensated_sum(col.iter().map(|v| (v - mean).powi(4))) / n;
            Some(m4 / (m2 * m2) - 3.0)
        })
        .collect()
}

fn clamp_kappa(kappa: f64, p: usize) -> f64 {
    kappa.max(kappa_lower_bound(p) + KAPPA_MARGIN)
}

/// `κ̂`: average marginal sample excess kurtosis divided by 3, clamped to
/// stay above `−2/(p+2)`.
pub fn estimate_kurtosis(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 4 {
        return Err(Error::InsufficientSamples {
            required: 4,
            got: n,
        });
    }
    let per = coordinate_excess_kurtosis(x);
    let mut vals = Vec::with_capacity(per.len());
    for (j, k) in per.into_iter().enumerate() {
        vals.push(k.ok_or(Error::DegenerateCoordinate(j))?);
    }
    let avg = compensated_sum(vals.iter().copied()) / vals.len() as f64;
    Ok(clamp_kappa(avg / 3.0, x.ncols()))
}

/// Kurtosis estimate used inside estimators: coordinates without spread are
/// ignored and `None` signals that no estimate is available.
pub(crate) fn kurtosis_lenient(x: &DMatrix<f64>) -> Option<f64> {
    if x.nrows() < 4 {
        return None;
    }
    let vals: Vec<f64> = coordinate_excess_kurtosis(x).into_iter().flatten().collect();
    if vals.is_empty() {
        return None;
    }
    let avg = compensated_sum(vals.iter().copied()) / vals.len() as f64;
    Some(clamp_kappa(avg / 3.0, x.ncols()))
}

/// Like [`kurtosis_lenient`] but with the usual small-sample adjustment
/// `G2 = ((n+1)g2 + 6)(n−1)/((n−2)(n−3))` per coordinate, which is unbiased
/// for Gaussian data. Used where `κ̂` feeds an otherwise unbiased moment
/// inversion.
pub(crate) fn kurtosis_adjusted_lenient(x: &DMatrix<f64>) -> Option<f64> {
    let n = x.nrows() as f64;
    if x.nrows() < 4 {
        return None;
    }
    let vals: Vec<f64> = coordinate_excess_kurtosis(x)
        .into_iter()
        .flatten()
        .map(|g| ((n + 1.0) * g + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)))
        .collect();
    if vals.is_empty() {
        return None;
    }
    let avg = compensated_sum(vals.iter().copied()) / vals.len() as f64;
    Some(clamp_kappa(avg / 3.0, x.ncols()))
}

fn clamp_gamma(gamma: f64, upper: f64) -> f64 {
    if gamma.is_nan() {
        return 1.0;
    }
    gamma.clamp(1.0, upper.max(1.0))
}

/// SSCM based sphericity `(n/(n−1))(‖Λ̂‖²_F/p − p/n)`, clamped to `[1, p]`.
///
/// `Λ̂` is centered at the spatial median; rows at the center are dropped and
/// `n` counts only the rows used.
pub fn estimate_sphericity_ell1(x: &DMatrix<f64>) -> Result<f64> {
    let p = x.ncols();
    if x.nrows() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: x.nrows(),
        });
    }
    let (lambda, used) = sscm_counted(x, None)?;
    if used < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: used,
        });
    }
    let n = used as f64;
    let pf = p as f64;
    let raw = n / (n - 1.0) * (lambda.fro2() / pf - pf / n);
    Ok(clamp_gamma(raw, pf))
}

/// Finite-sample constants `(â_n, b̂_n)` of the Ell2 estimator.
pub fn ell2_constants(n: usize, kappa_hat: f64) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            got: n,
        });
    }
    let nf = n as f64;
    let k = kappa_hat;
    let a = nf / (nf + k) * (nf / (nf - 1.0) + k);
    let b = (k + nf) * (nf - 1.0).powi(2) / ((nf - 2.0) * (3.0 * k * (nf - 1.0) + nf * (nf + 1.0)));
    Ok((a, b))
}

/// Ell2 sphericity from an SCM computed on `n` samples.
pub fn ell2_from_scm(s: &CovMatrix, n: usize, kappa_hat: f64) -> Result<f64> {
    Ok(clamp_gamma(ell2_raw(s, n, kappa_hat)?, s.dim() as f64))
}

fn ell2_raw(s: &CovMatrix, n: usize, kappa_hat: f64) -> Result<f64> {
    let (a, b) = ell2_constants(n, kappa_hat)?;
    let t = s.trace();
    if !(t > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let pf = s.dim() as f64;
    Ok(b * (pf * s.fro2() / (t * t) - a * pf / n as f64))
}

/// `b̂_n (p tr(S²)/tr(S)² − â_n p/n)`, clamped to `[1, p]`.
pub fn estimate_sphericity_ell2(x: &DMatrix<f64>, kappa_hat: f64) -> Result<f64> {
    let s = scm(x)?;
    ell2_from_scm(&s, x.nrows(), kappa_hat)
}

/// Unbiased estimate of `Σ_ij w_ij² σ_ij²` from `S`, obtained by inverting
/// the expectations of `Σ w² s_ij²` and `Σ w² s_ii s_jj`.
fn unbiased_weighted_fro2(w: &DMatrix<f64>, s: &CovMatrix, ctx: &MomentContext) -> Option<f64> {
    let p = s.dim();
    let sm = s.as_matrix();
    let d = s.diagonal();
    let a = compensated_sum(w.iter().zip(sm.iter()).map(|(w, s)| (w * s) * (w * s)));
    let b = compensated_sum((0..p).flat_map(|j| {
        let d = &d;
        (0..p).map(move |i| w[(i, j)] * w[(i, j)] * d[i] * d[j])
    }));
    let (t1, t2) = (ctx.tau1(), ctx.tau2());
    let det = (1.0 + t1 + t2) * (1.0 + t2) - 2.0 * t1 * t1;
    let est = ((1.0 + t2) * a - t1 * b) / det;
    (det > 0.0 && est > 0.0).then_some(est)
}

/// Sphericity of `W∘Σ`, `p‖W∘Σ‖²_F/tr(Σ)²`, estimated as the Ell2 value
/// rescaled by the ratio of unbiased estimates of `‖W∘Σ‖²_F` and `‖Σ‖²_F`.
///
/// Reduces to [`estimate_sphericity_ell2`] for the all-ones template.
pub fn estimate_sphericity_tapered(
    x: &DMatrix<f64>,
    w: &TaperTemplate,
    kappa_hat: f64,
) -> Result<f64> {
    let s = scm(x)?;
    tapered_from_scm(&s, x.nrows(), w, kappa_hat)
}

pub fn tapered_from_scm(s: &CovMatrix, n: usize, w: &TaperTemplate, kappa_hat: f64) -> Result<f64> {
    if w.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: w.dim(),
        });
    }
    if w.is_all_ones() {
        return ell2_from_scm(s, n, kappa_hat);
    }
    let gamma = ell2_raw(s, n, kappa_hat)?;
    let pf = s.dim() as f64;
    let wmax = w.w().iter().fold(1.0_f64, |a, &v| a.max(v));
    let upper = pf * wmax * wmax;
    let ctx = MomentContext::new(n, kappa_hat)?;
    let ones = TaperTemplate::all_ones(s.dim());
    let ratio = match (
        unbiased_weighted_fro2(w.w(), s, &ctx),
        unbiased_weighted_fro2(ones.w(), s, &ctx),
    ) {
        (Some(num), Some(den)) => num / den,
        // Fall back to the plug-in ratio when the correction breaks down.
        _ => {
            let wf = compensated_sum(
                w.w().iter().zip(s.as_matrix().iter()).map(|(w, s)| (w * s) * (w * s)),
            );
            wf / s.fro2()
        }
    };
    Ok(clamp_gamma(gamma * ratio, upper))
}
