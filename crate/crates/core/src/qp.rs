//! Small strictly convex quadratic programs:
//! minimize `½ aᵀQa − bᵀa` subject to `a ≥ l` and optionally `1ᵀa = 1`.
//!
//! Primal active-set method. The reduced Hessian is refactored from scratch
//! each iteration, which is cheap at the sizes this crate needs (a few
//! dozen variables) and avoids drift from repeated updates.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    q: DMatrix<f64>,
    b: DVector<f64>,
    lower: DVector<f64>,
    sum_to_one: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the bound constraints (zero for inactive bounds).
    pub bound_multipliers: DVector<f64>,
    /// Multiplier of `1ᵀa = 1`, zero when the constraint is absent.
    pub sum_multiplier: f64,
    pub iterations: usize,
}

impl QpProblem {
    /// Problem with lower bounds 0 and no equality constraint.
    pub fn new(q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let m = b.len();
        Self::with_bounds(q, b, DVector::zeros(m), false)
    }

    /// `lower` entries may be `-∞` to leave a variable unbounded.
    pub fn with_bounds(
        q: DMatrix<f64>,
        b: DVector<f64>,
        lower: DVector<f64>,
        sum_to_one: bool,
    ) -> Result<Self> {
        let m = b.len();
        if m == 0 {
            return Err(Error::InvalidParameter("empty problem".into()));
        }
        if q.nrows() != m || q.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: q.nrows(),
            });
        }
        if lower.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: lower.len(),
            });
        }
        if lower.iter().any(|l| l.is_nan() || *l == f64::INFINITY) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("bounds and linear term must be finite or -inf".into()));
        }
        let scale = q.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in (i + 1)..m {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::NotSymmetric((q[(i, j)] - q[(j, i)]).abs()));
                }
            }
        }
        let q = (&q + q.transpose()) * 0.5;
        let min_eig = q.clone().symmetric_eigenvalues().min();
        if !(min_eig > 1e-14 * scale) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self {
            q,
            b,
            lower,
            sum_to_one,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn sum_to_one(&self) -> bool {
        self.sum_to_one
    }

    pub fn objective(&self, a: &DVector<f64>) -> f64 {
        0.5 * a.dot(&(&self.q * a)) - self.b.dot(a)
    }

    /// Whether `a` satisfies every constraint up to `tol`.
    pub fn is_feasible(&self, a: &DVector<f64>, tol: f64) -> bool {
        let bounds = a.iter().zip(self.lower.iter()).all(|(x, l)| *x >= l - tol);
        bounds && (!self.sum_to_one || (a.sum() - 1.0).abs() <= tol)
    }

    /// Largest violation among stationarity, primal feasibility, dual
    /// feasibility and complementary slackness.
    pub fn kkt_residual(&self, sol: &QpSolution) -> f64 {
        let g = &self.q * &sol.x - &self.b;
        let mut r = 0.0_f64;
        for i in 0..self.dim() {
            let lam = sol.bound_multipliers[i];
            r = r.max((g[i] - lam - sol.sum_multiplier).abs());
            r = r.max((-lam).max(0.0));
            if self.lower[i].is_finite() {
                let slack = sol.x[i] - self.lower[i];
                r = r.max((-slack).max(0.0));
                r = r.max((lam * slack).abs());
            } else {
                r = r.max(lam.abs());
            }
        }
        if self.sum_to_one {
            r = r.max((sol.x.sum() - 1.0).abs());
        }
        r
    }

    /// A feasible starting point and the bounds active at it.
    fn start(&self) -> Result<(DVector<f64>, Vec<bool>)> {
        let m = self.dim();
        let mut a = DVector::zeros(m);
        let mut active = vec![false; m];
        if !self.sum_to_one {
            for i in 0..m {
                if self.lower[i].is_finite() {
                    a[i] = self.lower[i].max(0.0);
                    active[i] = a[i] == self.lower[i];
                }
            }
            return Ok((a, active));
        }
        let free = (0..m).find(|&i| self.lower[i] == f64::NEG_INFINITY);
        let bounded_sum: f64 = self.lower.iter().filter(|l| l.is_finite()).sum();
        match free {
            Some(f) => {
                for i in 0..m {
                    if self.lower[i].is_finite() {
                        a[i] = self.lower[i];
                        active[i] = true;
                    }
                }
                a[f] = 1.0 - bounded_sum;
            }
            None => {
                let slack = 1.0 - bounded_sum;
                if slack < -1e-12 {
                    return Err(Error::Infeasible(format!(
                        "lower bounds sum to {bounded_sum} > 1"
                    )));
                }
                if slack <= 0.0 {
                    // Single feasible point; keep one bound inactive so the
                    // working set stays independent of the equality.
                    for i in 0..m {
                        a[i] = self.lower[i];
                        active[i] = i + 1 < m;
                    }
                    a[m - 1] += slack;
                } else {
                    for i in 0..m {
                        a[i] = self.lower[i] + slack / m as f64;
                    }
                }
            }
        }
        Ok((a, active))
    }

    /// Minimizer over the free variables with the working-set bounds fixed:
    /// returns the step `d` and the equality multiplier `ν` such that
    /// `Q_FF d = −(g_F + ν1)`.
    fn subproblem(&self, g: &DVector<f64>, active: &[bool]) -> Result<(DVector<f64>, f64)> {
        let m = self.dim();
        let free: Vec<usize> = (0..m).filter(|&i| !active[i]).collect();
        let mut d = DVector::zeros(m);
        if free.is_empty() {
            return Ok((d, 0.0));
        }
        let k = free.len();
        let qff = DMatrix::from_fn(k, k, |i, j| self.q[(free[i], free[j])]);
        let gf = DVector::from_iterator(k, free.iter().map(|&i| g[i]));
        let chol = Cholesky::new(qff).ok_or(Error::Singular)?;
        let qg = chol.solve(&gf);
        let mut nu = 0.0;
        let step = if self.sum_to_one {
            let q1 = chol.solve(&DVector::from_element(k, 1.0));
            nu = -qg.sum() / q1.sum();
            -(qg + q1 * nu)
        } else {
            -qg
        };
        for (j, &i) in free.iter().enumerate() {
            d[i] = step[j];
        }
        Ok((d, nu))
    }
}

/// Solves the problem with a primal active-set method. Constraints are added
/// and dropped by smallest index among the candidates to avoid cycling.
pub fn solve(problem: &QpProblem) -> Result<QpSolution> {
    let m = problem.dim();
    let (mut a, mut active) = problem.start()?;
    let max_iter = 50 * (m + 1) * (m + 1);
    let scale = problem.q.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale.max(problem.b.amax()).max(1.0);

    for iter in 0..max_iter {
        let g = &problem.q * &a - &problem.b;
        let (d, nu) = problem.subproblem(&g, &active)?;
        let step_norm = d.amax();
        let a_norm = a.amax().max(1.0);
        if step_norm <= 1e-13 * a_norm {
            let mut lam = DVector::zeros(m);
            for i in 0..m {
                if active[i] {
                    lam[i] = g[i] + nu;
                }
            }
            match (0..m).find(|&i| active[i] && lam[i] < -tol) {
                None => {
                    return Ok(QpSolution {
                        x: a,
                        bound_multipliers: lam,
                        sum_multiplier: -nu,
                        iterations: iter,
                    })
                }
                Some(i) => {
                    active[i] = false;
                    continue;
                }
            }
        }
        let mut t = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if !active[i] && d[i] < 0.0 && problem.lower[i].is_finite() {
                let ti = (problem.lower[i] - a[i]) / d[i];
                if ti < t {
                    t = ti.max(0.0);
                    blocking = Some(i);
                }
            }
        }
        a += &d * t;
        if let Some(i) = blocking {
            a[i] = problem.lower[i];
            active[i] = true;
        }
    }
    Err(Error::Degenerate(format!(
        "active-set iteration limit {max_iter} reached"
    )))
}
