//! Symmetric covariance-type matrices.
//!
//! [`CovMatrix`] wraps a dense `p × p` matrix that is symmetric by
//! construction and caches its trace and squared Frobenius norm, the two
//! quantities every shrinkage formula in this crate is built from.

use nalgebra::{DMatrix, SymmetricEigen};
use crate::error::{Error, Result};

/// Relative tolerance used by the PD check: `λ_min > PD_TOL · tr(Σ)/p`.
pub const PD_TOL: f64 = 1e-10;

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dense symmetric matrix with cached trace and squared Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    m: DMatrix<f64>,
    trace: f64,
    fro2: f64,
}

impl CovMatrix {
    /// Wraps `m`, rejecting non-square or visibly asymmetric input.
    ///
    /// Entries are averaged with their transpose so the stored matrix is
    /// exactly symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        let mut asym = 0.0_f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if !asym.is_finite() || asym > 1e-8 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::from_symmetric(m))
    }

    /// Symmetrizes `m` as `(m + mᵀ)/2` without checking.
    pub fn from_symmetric(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let trace = compensated_sum((0..p).map(|i| m[(i, i)]));
        let fro2 = compensated_sum(m.iter().map(|v| v * v));
        Self { m, trace, fro2 }
    }

    pub fn identity(p: usize) -> Self {
        Self::from_symmetric(DMatrix::identity(p, p))
    }

    pub fn scaled_identity(p: usize, c: f64) -> Self {
        Self::from_symmetric(DMatrix::from_diagonal_element(p, p, c))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let p = d.len();
        Self::from_symmetric(DMatrix::from_fn(p, p, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Squared Frobenius norm `‖Σ‖²_F = tr(Σ²)`.
    pub fn fro2(&self) -> f64 {
        self.fro2
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[(i, i)]).collect()
    }

    /// Scale `η = tr(Σ)/p`, the mean eigenvalue.
    pub fn scale(&self) -> f64 {
        self.trace / self.dim() as f64
    }

    /// Sphericity `γ = p·tr(Σ²)/tr(Σ)²`.
    pub fn sphericity(&self) -> f64 {
        self.dim() as f64 * self.fro2 / (self.trace * self.trace)
    }

    /// Shape matrix `Λ = pΣ/tr(Σ)`.
    pub fn shape(&self) -> CovMatrix {
        self.scaled(self.dim() as f64 / self.trace)
    }

    pub fn scaled(&self, c: f64) -> CovMatrix {
        CovMatrix {
            m: &self.m * c,
            trace: self.trace * c,
            fro2: self.fro2 * c * c,
        }
    }

    /// Frobenius inner product `⟨A, B⟩ = tr(AB)` for symmetric arguments.
    pub fn inner(&self, other: &CovMatrix) -> f64 {
        compensated_sum(self.m.iter().zip(other.m.iter()).map(|(a, b)| a * b))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &CovMatrix, b: f64) -> CovMatrix {
        CovMatrix::from_symmetric(&self.m * a + &other.m * b)
    }

    /// Adds `c` to the diagonal.
    pub fn add_diagonal(&self, c: f64) -> CovMatrix {
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += c;
        }
        CovMatrix::from_symmetric(m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.m.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(f64::NAN)
    }

    /// Positive definite under the scale-relative threshold [`PD_TOL`].
    pub fn is_pd(&self) -> bool {
        self.check_pd().is_ok()
    }

    pub fn check_pd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if self.trace > 0.0 && min > PD_TOL * self.scale() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            })
        }
    }
}

impl AsRef<DMatrix<f64>> for CovMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}
