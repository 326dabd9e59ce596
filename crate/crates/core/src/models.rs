//! Population-side elliptical models.
//!
//! An [`EllipticalModel`] is parameterized by its mean and its covariance
//! matrix Σ (not the canonical scatter), so draws from every family have
//! `cov(x) = Σ`. Student t draws are rescaled by `√((ν−2)/ν)` for this.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;

/// Seedable generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Generator for Monte Carlo trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> SimRng {
    SimRng::seed_from_u64(seed.wrapping_add(trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    StudentT { dof: f64 },
}

impl Family {
    /// Elliptical kurtosis κ (one third of the marginal excess kurtosis).
    pub fn kurtosis(&self) -> Result<f64> {
        match *self {
            Family::Gaussian => Ok(0.0),
            Family::StudentT { dof } if dof > 4.0 => Ok(2.0 / (dof - 4.0)),
            Family::StudentT { dof } => Err(Error::InfiniteKurtosis { dof }),
        }
    }

    /// Marginal excess kurtosis `kurt = 3κ`.
    pub fn marginal_excess_kurtosis(&self) -> Result<f64> {
        Ok(3.0 * self.kurtosis()?)
    }
}

#[derive(Debug, Clone)]
pub struct EllipticalModel {
    mu: DVector<f64>,
    sigma: CovMatrix,
    family: Family,
    chol_l: DMatrix<f64>,
}

impl EllipticalModel {
    pub fn new(mu: DVector<f64>, sigma: CovMatrix, family: Family) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                got: mu.len(),
            });
        }
        if let Family::StudentT { dof } = family {
            if !(dof > 2.0) {
                return Err(Error::InvalidModel(format!(
                    "Student t needs dof > 2 for a finite covariance, got {dof}"
                )));
            }
        }
        sigma
            .check_pd()
            .map_err(|e| Error::InvalidModel(format!("sigma: {e}")))?;
        let chol_l = sigma
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidModel("Cholesky factorization failed".into()))?
            .l();
        Ok(Self {
            mu,
            sigma,
            family,
            chol_l,
        })
    }

    /// Zero-mean model.
    pub fn centered(sigma: CovMatrix, family: Family) -> Result<Self> {
        let p = sigma.dim();
        Self::new(DVector::zeros(p), sigma, family)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &CovMatrix {
        &self.sigma
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn population_kurtosis(&self) -> Result<f64> {
        self.family.kurtosis()
    }

    /// Draws `n` i.i.d. rows from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SimRng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// Draws `n` i.i.d. rows as an `n × p` matrix.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let chi2 = match self.family {
            Family::StudentT { dof } => Some((dof, ChiSquared::new(dof).expect("dof > 2"))),
            Family::Gaussian => None,
        };
        let mut z = DMatrix::<f64>::zeros(n, p);
        let mut radial = vec![1.0; n];
        for i in 0..n {
            for j in 0..p {
                z[(i, j)] = rng.sample(StandardNormal);
            }
            if let Some((dof, dist)) = &chi2 {
                let w: f64 = dist.sample(rng);
                radial[i] = ((dof - 2.0) / w).sqrt();
            }
        }
        let mut x = z * self.chol_l.transpose();
        for i in 0..n {
            for j in 0..p {
                x[(i, j)] = x[(i, j)] * radial[i] + self.mu[j];
            }
        }
        x
    }
}

/// AR(1) covariance `Σ_ij = η ϱ^|i−j|`.
pub fn ar1_cov(eta: f64, rho: f64, p: usize) -> Result<CovMatrix> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be > 0, got {eta}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in (-1, 1), got {rho}"
        )));
    }
    let m = DMatrix::from_fn(p, p, |i, j| eta * rho.powi(i.abs_diff(j) as i32));
    Ok(CovMatrix::from_symmetric(m))
}

/// Polynomially decaying model: unit diagonal, `ρ|i−j|^−(α+1)` off the diagonal.
pub fn cai_cov(rho: f64, alpha: f64, p: usize) -> Result<CovMatrix> {
    let m = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            rho * (i.abs_diff(j) as f64).powf(-(alpha + 1.0))
        }
    });
    let sigma = CovMatrix::from_symmetric(m);
    sigma.check_pd()?;
    Ok(sigma)
}

/// Closed-form sphericity of the AR(1) model (independent of η).
pub fn sphericity_ar1(rho: f64, p: usize) -> f64 {
    let pf = p as f64;
    let r2 = rho * rho;
    if (1.0 - r2).abs() < 1e-4 {
        // Cancellation in the closed form near |ϱ| = 1; sum the lags directly.
        let mut s = pf;
        let mut pow = 1.0;
        for lag in 1..p {
            pow *= r2;
            s += 2.0 * (pf - lag as f64) * pow;
        }
        return s / pf;
    }
    (pf - pf * r2 * r2 - 2.0 * r2 + 2.0 * r2.powi(p as i32 + 1)) / (pf * (r2 - 1.0).powi(2))
}

/// AR(1) correlation in `[0, 1)` whose sphericity at dimension `p` equals `gamma`.
pub fn ar1_rho_for_sphericity(gamma: f64, p: usize) -> Result<f64> {
    if !(gamma >= 1.0 && gamma < p as f64) {
        return Err(Error::InvalidParameter(format!(
            "sphericity must lie in [1, {p}), got {gamma}"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sphericity_ar1(mid, p) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn sphericity(sigma: &CovMatrix) -> f64 {
    sigma.sphericity()
}

pub fn scale(sigma: &CovMatrix) -> f64 {
    sigma.scale()
}

pub fn shape(sigma: &CovMatrix) -> CovMatrix {
    sigma.shape()
}
