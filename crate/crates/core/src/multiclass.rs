//! Covariance estimation for several populations at once: coupled shrinkage
//! toward the pooled SCM and a scaled identity, and linear pooling of the
//! class SCMs with QP-constrained weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CovMatrix;
use crate::qp::{self, QpProblem};
use crate::scalars::kurtosis_adjusted_lenient;
use crate::scm::{pool, ClassPanel};
use crate::theory::{mse_scm, MomentContext};

/// Second-order scalars of K populations, all scaled by `1/p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScalars {
    pub p: usize,
    pub n: Vec<usize>,
    /// Sample proportions `π_k`.
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `δ_k = E‖S_k − Σ_k‖²_F / p`.
    pub delta: Vec<f64>,
    /// `c_ij = tr(Σ_i Σ_j) / p`.
    pub c: DMatrix<f64>,
    /// `tr(Σ_k)²`, kept separately because `(pη̂_k)²` is biased.
    pub tr2: Vec<f64>,
    /// `var(tr S_k)`.
    pub var_tr: Vec<f64>,
}

impl ClassScalars {
    /// Exact scalars for known covariances, sample sizes and kurtoses.
    pub fn from_population(sigmas: &[CovMatrix], n: &[usize], kappa: &[f64]) -> Result<Self> {
        let k = sigmas.len();
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one class".into()));
        }
        if n.len() != k || kappa.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: n.len().min(kappa.len()),
            });
        }
        let p = sigmas[0].dim();
        if let Some(s) = sigmas.iter().find(|s| s.dim() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: s.dim(),
            });
        }
        let pf = p as f64;
        let total: usize = n.iter().sum();
        let mut out = Self {
            p,
            n: n.to_vec(),
            pi: n.iter().map(|&v| v as f64 / total as f64).collect(),
            eta: sigmas.iter().map(|s| s.scale()).collect(),
            kappa: kappa.to_vec(),
            gamma: sigmas.iter().map(|s| s.sphericity()).collect(),
            delta: Vec::with_capacity(k),
            c: DMatrix::from_fn(k, k, |i, j| sigmas[i].inner(&sigmas[j]) / pf),
            tr2: sigmas.iter().map(|s| s.trace() * s.trace()).collect(),
            var_tr: Vec::with_capacity(k),
        };
        for i in 0..k {
            let ctx = MomentContext::with_dim(n[i], kappa[i], p)?;
            out.delta.push(mse_scm(&sigmas[i], &ctx) / pf);
            out.var_tr.push(2.0 * ctx.tau1() * sigmas[i].fro2() + ctx.tau2() * out.tr2[i]);
        }
        Ok(out)
    }

    pub fn num_classes(&self) -> usize {
        self.n.len()
    }

    /// `Δ + C`, checked to be positive definite.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let mut g = self.c.clone();
        for i in 0..self.num_classes() {
            g[(i, i)] += self.delta[i];
        }
        let g = CovMatrix::from_symmetric(g);
        g.check_pd()?;
        Ok(g.into_inner())
    }

    /// `E⟨S_i, S_j⟩ / p`.
    fn g(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)] + if i == j { self.delta[i] } else { 0.0 }
    }

    /// `E[tr S_i tr S_j] / p²`.
    fn h(&self, i: usize, j: usize) -> f64 {
        let p2 = (self.p * self.p) as f64;
        if i == j {
            (self.tr2[i] + self.var_tr[i]) / p2
        } else {
            self.eta[i] * self.eta[j]
        }
    }
}

/// Per-class scalars estimated from data.
///
/// `κ̂_k` uses the small-sample adjusted kurtosis, since its bias would
/// otherwise carry straight into the corrections below.
///
/// `‖Σ_k‖²_F` and `tr(Σ_k)²` are recovered without bias by inverting the
/// expectations of `‖S_k‖²_F` and `tr(S_k)²` at the plug-in kurtosis;
/// cross terms use `tr(S_i S_j)/p`, unbiased by independence.
pub fn estimate_class_scalars(panel: &ClassPanel) -> Result<ClassScalars> {
    let p = panel.dim();
    let pf = p as f64;
    let k = panel.num_classes();
    let scms = panel.class_scms()?;
    let mut out = ClassScalars {
        p,
        n: panel.sizes(),
        pi: panel.proportions(),
        eta: Vec::with_capacity(k),
        kappa: Vec::with_capacity(k),
        gamma: Vec::with_capacity(k),
        delta: Vec::with_capacity(k),
        c: DMatrix::zeros(k, k),
        tr2: Vec::with_capacity(k),
        var_tr: Vec::with_capacity(k),
    };
    for (i, s) in scms.iter().enumerate() {
        let t = s.trace();
        if !(t > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let kappa = kurtosis_adjusted_lenient(panel.class(i)).unwrap_or(0.0);
        let ctx = MomentContext::with_dim(out.n[i], kappa, p)?;
        let (t1, t2) = (ctx.tau1(), ctx.tau2());
        let det = (1.0 + t1 + t2) * (1.0 + t2) - 2.0 * t1 * t1;
        let a = s.fro2();
        let b = t * t;
        let tr2 = (((1.0 + t1 + t2) * b - 2.0 * t1 * a) / det).max(1e-12 * b);
        let fro2 = (((1.0 + t2) * a - t1 * b) / det).clamp(tr2 / pf, tr2);
        out.eta.push(t / pf);
        out.kappa.push(kappa);
        out.gamma.push(pf * fro2 / tr2);
        out.delta.push(((t1 + t2) * fro2 + t1 * tr2) / pf);
        out.tr2.push(tr2);
        out.var_tr.push(2.0 * t1 * fro2 + t2 * tr2);
        out.c[(i, i)] = fro2 / pf;
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let v = scms[i].inner(&scms[j]) / pf;
            out.c[(i, j)] = v;
            out.c[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `M̂_k = α(βS_k + (1−β)S_pool) + (1−α)(tr(βS_k + (1−β)S_pool)/p) I` for
/// every class, with class-specific `(α_k, β_k)`.
pub fn coupled_rscm(panel: &ClassPanel, alpha: &[f64], beta: &[f64]) -> Result<Vec<CovMatrix>> {
    let k = panel.num_classes();
    if alpha.len() != k || beta.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: alpha.len().min(beta.len()),
        });
    }
    let scms = panel.class_scms()?;
    let pooled = pool(&scms, &panel.proportions());
    Ok((0..k)
        .map(|i| {
            let m = scms[i].combine(beta[i], &pooled, 1.0 - beta[i]);
            let eta = m.scale();
            m.scaled(alpha[i]).add_diagonal((1.0 - alpha[i]) * eta)
        })
        .collect())
}

/// `E‖M̂_k(α,β) − Σ_k‖²_F / p` of [`coupled_rscm`] at known scalars.
///
/// With `c = π + β(e_k − π)` and `T = tr(M_β)/p` this is
/// `α²cᵀ(G−H)c + cᵀHc + 2α(η_k cᵀη − cᵀC_k) − 2η_k cᵀη + c_kk`.
pub fn coupled_mse(class: usize, sc: &ClassScalars, alpha: f64, beta: f64) -> Result<f64> {
    let [a2, a1, a0] = coupled_quadratic(class, sc, beta)?;
    Ok(alpha * alpha * a2 + alpha * a1 + a0)
}

/// Coefficients of the coupled MSE as a quadratic in `α` at fixed `β`.
fn coupled_quadratic(class: usize, sc: &ClassScalars, beta: f64) -> Result<[f64; 3]> {
    let k = sc.num_classes();
    if class >= k {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {k} classes"
        )));
    }
    let c: Vec<f64> = (0..k)
        .map(|j| (1.0 - beta) * sc.pi[j] + if j == class { beta } else { 0.0 })
        .collect();
    let (mut cgc, mut chc, mut cck, mut ceta) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            cgc += c[i] * c[j] * sc.g(i, j);
            chc += c[i] * c[j] * sc.h(i, j);
        }
        cck += c[i] * sc.c[(i, class)];
        ceta += c[i] * sc.eta[i];
    }
    let eta_k = sc.eta[class];
    Ok([
        cgc - chc,
        2.0 * (eta_k * ceta - cck),
        chc - 2.0 * eta_k * ceta + sc.c[(class, class)],
    ])
}

/// Oracle `(α, β, MSE)` of the coupled estimator over `[0,1]²`.
///
/// The optimal `α` is explicit for each `β`; the profile in `β` is scanned
/// on a fine grid and polished by golden-section search.
pub fn coupled_oracle(class: usize, sc: &ClassScalars) -> Result<(f64, f64, f64)> {
    let profile = |beta: f64| -> Result<(f64, f64)> {
        let [a2, a1, a0] = coupled_quadratic(class, sc, beta)?;
        let a = unit_quadratic_argmin(a2, a1);
        Ok((a, a * a * a2 + a * a1 + a0))
    };
    const GRID: usize = 1000;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=GRID {
        let v = profile(i as f64 / GRID as f64)?.1;
        if v < best.1 {
            best = (i, v);
        }
    }
    let step = 1.0 / GRID as f64;
    let (mut lo, mut hi) = (
        (best.0 as f64 - 1.0).max(0.0) * step,
        (best.0 as f64 + 1.0).min(GRID as f64) * step,
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let x1 = hi - ratio * (hi - lo);
        let x2 = lo + ratio * (hi - lo);
        if profile(x1)?.1 <= profile(x2)?.1 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (a, v) = profile(mid)?;
    let grid_beta = best.0 as f64 * step;
    if v <= best.1 {
        Ok((a, mid, v))
    } else {
        let (a, v) = profile(grid_beta)?;
        Ok((a, grid_beta, v))
    }
}

/// Data-driven coupled estimate for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResult {
    pub class: usize,
    pub alpha: f64,
    pub beta: f64,
    pub estimate: CovMatrix,
}

/// [`coupled_rscm`] with `(α, β)` minimizing [`coupled_mse`] at the
/// estimated class scalars.
pub fn coupled_plugin(panel: &ClassPanel) -> Result<Vec<CoupledResult>> {
    let sc = estimate_class_scalars(panel)?;
    let k = panel.num_classes();
    let mut alpha = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);
    for class in 0..k {
        let (a, b, _) = coupled_oracle(class, &sc)?;
        alpha.push(a);
        beta.push(b);
    }
    let est = coupled_rscm(panel, &alpha, &beta)?;
    Ok(est
        .into_iter()
        .enumerate()
        .map(|(class, estimate)| CoupledResult {
            class,
            alpha: alpha[class],
            beta: beta[class],
            estimate,
        })
        .collect())
}

/// Scale target of the streamlined estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityTarget {
    /// `(tr(S_k)/p) I`
    Own,
    /// `(tr(S_pool)/p) I`
    Pooled,
}

/// `α(βS_k + (1−β)S_pool) + (1−α) I_T`.
pub fn streamlined_estimate(
    panel: &ClassPanel,
    class: usize,
    alpha: f64,
    beta: f64,
    target: IdentityTarget,
) -> Result<CovMatrix> {
    let scms = panel.class_scms()?;
    let pooled = pool(&scms, &panel.proportions());
    let m = scms[class].combine(beta, &pooled, 1.0 - beta);
    let eta = match target {
        IdentityTarget::Own => scms[class].scale(),
        IdentityTarget::Pooled => pooled.scale(),
    };
    Ok(m.scaled(alpha).add_diagonal((1.0 - alpha) * eta))
}

/// Coefficients of
/// `α²β²B22 + α²βB21 + α²B20 + αβB11 + αB10 + B00`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub b22: f64,
    pub b21: f64,
    pub b20: f64,
    pub b11: f64,
    pub b10: f64,
    pub b00: f64,
}

impl PolyCoeffs {
    pub fn eval(&self, alpha: f64, beta: f64) -> f64 {
        let a2 = alpha * alpha;
        a2 * (beta * beta * self.b22 + beta * self.b21 + self.b20)
            + alpha * (beta * self.b11 + self.b10)
            + self.b00
    }

    fn is_zero(&self) -> bool {
        [self.b22, self.b21, self.b20, self.b11, self.b10]
            .iter()
            .all(|v| *v == 0.0)
    }
}

/// Coefficients of `E‖α(βS_k + (1−β)S_pool) + (1−α)I_T − Σ_k‖²_F / p`.
///
/// Expanding with `M_β = Σ_j (π_j + β(δ_jk − π_j)) S_j`, `X = M_β − I_T` and
/// `Y = I_T − Σ_k` gives `α²E‖X‖² + 2αE⟨X,Y⟩ + E‖Y‖²`, where every
/// expectation is a quadratic form in `E⟨S_i,S_j⟩`, `E[tr S_i tr S_j]`,
/// `tr(Σ_iΣ_j)` and `η_j`.
pub fn streamlined_coeffs(
    class: usize,
    sc: &ClassScalars,
    target: IdentityTarget,
) -> Result<PolyCoeffs> {
    let k = sc.num_classes();
    if class >= k {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {k} classes"
        )));
    }
    sc.gram()?;
    let pi = DVector::from_vec(sc.pi.clone());
    let mut d = -pi.clone();
    d[class] += 1.0;
    let u = match target {
        IdentityTarget::Own => {
            let mut e = DVector::zeros(k);
            e[class] = 1.0;
            e
        }
        IdentityTarget::Pooled => pi.clone(),
    };
    let g = DMatrix::from_fn(k, k, |i, j| sc.g(i, j));
    let h = DMatrix::from_fn(k, k, |i, j| sc.h(i, j));
    let eta = DVector::from_vec(sc.eta.clone());
    let ck = sc.c.column(class).into_owned();
    let eta_k = sc.eta[class];

    // All quantities below are already divided by p.
    let hu = &h * &u;
    let uhu = u.dot(&hu);
    let b22 = d.dot(&(&g * &d));
    let b21 = 2.0 * d.dot(&(&g * &pi)) - 2.0 * d.dot(&hu);
    let b20 = pi.dot(&(&g * &pi)) - 2.0 * pi.dot(&hu) + uhu;
    let lin = &hu - &ck;
    let b11 = 2.0 * d.dot(&lin);
    let b10 = 2.0 * (pi.dot(&lin) - uhu + eta_k * u.dot(&eta));
    let b00 = uhu - 2.0 * eta_k * u.dot(&eta) + sc.c[(class, class)];
    Ok(PolyCoeffs {
        b22,
        b21,
        b20,
        b11,
        b10,
        b00,
    })
}

/// `argmin_{x ∈ [0,1]} a2 x² + a1 x`.
fn unit_quadratic_argmin(a2: f64, a1: f64) -> f64 {
    if a2 > 0.0 {
        (-a1 / (2.0 * a2)).clamp(0.0, 1.0)
    } else if a2 + a1 < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Minimizer of the polynomial over `[0,1]²`.
///
/// The interior stationary point is used when it lies in the open square;
/// otherwise, and as a safeguard, the minimizers along the four edges are
/// compared and the smallest value wins.
pub fn streamlined_optimal(b: &PolyCoeffs) -> Result<(f64, f64)> {
    if b.is_zero() {
        return Err(Error::Degenerate(
            "all polynomial coefficients are zero".into(),
        ));
    }
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(5);
    let den_a = b.b21 * b.b21 - 4.0 * b.b20 * b.b22;
    let num_a = 2.0 * b.b10 * b.b22 - b.b11 * b.b21;
    if den_a != 0.0 && num_a != 0.0 {
        let alpha = num_a / den_a;
        let beta = (2.0 * b.b11 * b.b20 - b.b10 * b.b21) / num_a;
        if alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 {
            candidates.push((alpha, beta));
        }
    }
    // (i) β = 0
    candidates.push((unit_quadratic_argmin(b.b20, b.b10), 0.0));
    // (ii) β = 1
    candidates.push((
        unit_quadratic_argmin(b.b22 + b.b21 + b.b20, b.b11 + b.b10),
        1.0,
    ));
    // (iii) α = 1
    candidates.push((1.0, unit_quadratic_argmin(b.b22, b.b21 + b.b11)));
    // (iv) α = 0, β arbitrary
    candidates.push((0.0, 0.0));

    let mut best = candidates[0];
    let mut best_val = b.eval(best.0, best.1);
    for &c in &candidates[1..] {
        let v = b.eval(c.0, c.1);
        if v < best_val {
            best = c;
            best_val = v;
        }
    }
    Ok(best)
}

/// Data-driven streamlined estimate for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamlinedResult {
    pub class: usize,
    pub alpha: f64,
    pub beta: f64,
    pub coeffs: PolyCoeffs,
    pub estimate: CovMatrix,
}

/// Streamlined coupled estimator for every class with plug-in scalars.
pub fn streamlined_rscm(panel: &ClassPanel, target: IdentityTarget) -> Result<Vec<StreamlinedResult>> {
    let sc = estimate_class_scalars(panel)?;
    (0..panel.num_classes())
        .map(|k| {
            let coeffs = streamlined_coeffs(k, &sc, target)?;
            let (alpha, beta) = streamlined_optimal(&coeffs)?;
            Ok(StreamlinedResult {
                class: k,
                alpha,
                beta,
                coeffs,
                estimate: streamlined_estimate(panel, k, alpha, beta, target)?,
            })
        })
        .collect()
}

/// Options of [`linpool_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinpoolOptions {
    /// Add the identity matrix as an extra pooled term.
    pub identity_augment: bool,
    /// Lower bound on the identity weight.
    pub eps: f64,
    /// Require all weights to sum to one.
    pub simplex: bool,
}

impl Default for LinpoolOptions {
    fn default() -> Self {
        Self {
            identity_augment: false,
            eps: 1e-6,
            simplex: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinpoolWeights {
    pub class: usize,
    /// Weights of the class SCMs.
    pub a: Vec<f64>,
    /// Weight of the identity, when augmented.
    pub identity: Option<f64>,
    /// Whether the closed-form unconstrained solution was feasible.
    pub unconstrained: bool,
}

/// Quadratic data `(Q, b, lower)` of `min ½aᵀQa − bᵀa`, whose objective is
/// `(E‖Σ a_i S_i − Σ_k‖²_F/p − c_kk)/2`.
pub fn linpool_problem(
    sc: &ClassScalars,
    class: usize,
    opts: &LinpoolOptions,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let k = sc.num_classes();
    if class >= k {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {k} classes"
        )));
    }
    let gram = sc.gram()?;
    let ck = sc.c.column(class).into_owned();
    if !opts.identity_augment {
        return Ok((gram, ck, DVector::zeros(k)));
    }
    if !(opts.eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps {} must be >= 0", opts.eps)));
    }
    let mut q = DMatrix::zeros(k + 1, k + 1);
    q.view_mut((0, 0), (k, k)).copy_from(&gram);
    for i in 0..k {
        q[(i, k)] = sc.eta[i];
        q[(k, i)] = sc.eta[i];
    }
    q[(k, k)] = 1.0;
    let mut b = DVector::zeros(k + 1);
    b.rows_mut(0, k).copy_from(&ck);
    b[k] = sc.eta[class];
    let mut lower = DVector::zeros(k + 1);
    lower[k] = opts.eps;
    Ok((q, b, lower))
}

/// MSE-optimal nonnegative pooling weights for `class`.
///
/// Returns `(Δ + C)⁻¹ c_k` when it already satisfies the bounds (and no
/// simplex constraint is requested), else the QP solution.
pub fn linpool_weights(sc: &ClassScalars, class: usize, opts: &LinpoolOptions) -> Result<LinpoolWeights> {
    let k = sc.num_classes();
    let (q, b, lower) = linpool_problem(sc, class, opts)?;
    let split = |x: &DVector<f64>, unconstrained: bool| LinpoolWeights {
        class,
        a: x.rows(0, k).iter().copied().collect(),
        identity: opts.identity_augment.then(|| x[k]),
        unconstrained,
    };
    if !opts.simplex {
        let chol = q.clone().cholesky().ok_or(Error::Singular)?;
        let x = chol.solve(&b);
        if x.iter().zip(lower.iter()).all(|(v, l)| v >= l) {
            return Ok(split(&x, true));
        }
    }
    let problem = QpProblem::with_bounds(q, b, lower, opts.simplex)?;
    let sol = qp::solve(&problem)?;
    Ok(split(&sol.x, false))
}

/// `Σ_i a_i S_i (+ a_I I)`.
pub fn linpool_estimate(panel: &ClassPanel, weights: &LinpoolWeights) -> Result<CovMatrix> {
    let scms = panel.class_scms()?;
    linpool_from_scms(&scms, weights)
}

pub fn linpool_from_scms(scms: &[CovMatrix], weights: &LinpoolWeights) -> Result<CovMatrix> {
    if weights.a.len() != scms.len() {
        return Err(Error::DimensionMismatch {
            expected: scms.len(),
            got: weights.a.len(),
        });
    }
    let m = pool(scms, &weights.a);
    Ok(match weights.identity {
        Some(a) => m.add_diagonal(a),
        None => m,
    })
}

/// Data-driven linear pooling for every class.
pub fn linpool(panel: &ClassPanel, opts: &LinpoolOptions) -> Result<Vec<(LinpoolWeights, CovMatrix)>> {
    let sc = estimate_class_scalars(panel)?;
    let scms = panel.class_scms()?;
    (0..panel.num_classes())
        .map(|k| {
            let w = linpool_weights(&sc, k, opts)?;
            let est = linpool_from_scms(&scms, &w)?;
            Ok((w, est))
        })
        .collect()
}
