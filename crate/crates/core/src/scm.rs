//! Empirical matrices: sample covariance, pooled SCM, spatial median,
//! spatial sign covariance and Hadamard tapering.

use nalgebra::{DMatrix, DVector};
use crate::error::{Error, Result};
use crate::matrix::CovMatrix;

/// Unbiased sample covariance matrix (divisor `n − 1`) of the rows of `x`.
pub fn scm(x: &DMatrix<f64>) -> Result<CovMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: n,
        });
    }
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let s = centered.tr_mul(&centered) / (n as f64 - 1.0);
    Ok(CovMatrix::from_symmetric(s))
}

/// Per-class samples sharing a common dimension.
#[derive(Debug, Clone)]
pub struct ClassPanel {
    classes: Vec<DMatrix<f64>>,
    labels: Vec<String>,
}

impl ClassPanel {
    pub fn new(classes: Vec<DMatrix<f64>>) -> Result<Self> {
        let labels = (0..classes.len()).map(|k| format!("class{}", k + 1)).collect();
        Self::with_labels(classes, labels)
    }

    pub fn with_labels(classes: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidParameter("panel needs at least one class".into()));
        }
        if labels.len() != classes.len() {
            return Err(Error::DimensionMismatch {
                expected: classes.len(),
                got: labels.len(),
            });
        }
        let p = classes[0].ncols();
        for x in &classes {
            if x.ncols() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: x.ncols(),
                });
            }
            if x.nrows() < 2 {
                return Err(Error::InsufficientSamples {
                    required: 2,
                    got: x.nrows(),
                });
            }
        }
        Ok(Self { classes, labels })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].ncols()
    }

    pub fn class(&self, k: usize) -> &DMatrix<f64> {
        &self.classes[k]
    }

    pub fn classes(&self) -> &[DMatrix<f64>] {
        &self.classes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|x| x.nrows()).collect()
    }

    /// Sample proportions `π_k = n_k / Σ_j n_j`.
    pub fn proportions(&self) -> Vec<f64> {
        let sizes = self.sizes();
        let total: usize = sizes.iter().sum();
        sizes.iter().map(|&n| n as f64 / total as f64).collect()
    }

    pub fn class_scms(&self) -> Result<Vec<CovMatrix>> {
        self.classes.iter().map(scm).collect()
    }
}

/// `Σ_k π_k S_k` given the class SCMs and their proportions.
pub fn pool(scms: &[CovMatrix], weights: &[f64]) -> CovMatrix {
    let p = scms[0].dim();
    let mut acc = DMatrix::zeros(p, p);
    for (s, &w) in scms.iter().zip(weights) {
        acc += s.as_matrix() * w;
    }
    CovMatrix::from_symmetric(acc)
}

/// Pooled SCM with sample-size weights.
pub fn pooled_scm(panel: &ClassPanel) -> Result<CovMatrix> {
    let scms = panel.class_scms()?;
    Ok(pool(&scms, &panel.proportions()))
}

const WEISZFELD_MAX_ITER: usize = 500;
const WEISZFELD_REL_TOL: f64 = 1e-10;

fn sum_distances(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    x.row_iter()
        .map(|r| (r.transpose() - y).norm())
        .sum()
}

/// Whether data point `j` satisfies the subgradient optimality condition of
/// the spatial median objective.
fn data_point_is_optimal(x: &DMatrix<f64>, j: usize, tol: f64) -> bool {
    let xj = x.row(j).transpose();
    let mut r = DVector::zeros(x.ncols());
    let mut multiplicity = 0.0;
    for row in x.row_iter() {
        let d = row.transpose() - &xj;
        let nd = d.norm();
        if nd <= tol {
            multiplicity += 1.0;
        } else {
            r += d / nd;
        }
    }
    r.norm() <= multiplicity
}

/// Sample spatial median `argmin_μ Σ_i ‖x_i − μ‖`.
///
/// Weiszfeld iterations with the Vardi–Zhang step when the iterate hits a
/// data point. Stops when the relative objective decrease drops below
/// `1e-10`; fails after 500 iterations.
pub fn spatial_median(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 {
        return Err(Error::InsufficientSamples {
            required: 1,
            got: 0,
        });
    }
    if n == 1 {
        return Ok(x.row(0).transpose());
    }
    let mut y = x.row_mean().transpose();
    let spread = x
        .row_iter()
        .map(|r| (r.transpose() - &y).norm())
        .fold(0.0_f64, f64::max);
    if spread == 0.0 {
        return Ok(y);
    }
    let coincide = 1e-12 * spread;
    let mut obj = sum_distances(x, &y);

    for _ in 0..WEISZFELD_MAX_ITER {
        let mut num = DVector::zeros(p);
        let mut den = 0.0;
        let mut resid = DVector::zeros(p);
        let mut hits = 0.0;
        for row in x.row_iter() {
            let xi = row.transpose();
            let diff = &xi - &y;
            let d = diff.norm();
            if d <= coincide {
                hits += 1.0;
                continue;
            }
            num += &xi / d;
            den += 1.0 / d;
            resid += diff / d;
        }
        let t = num / den;
        let next = if hits > 0.0 {
            let r = resid.norm();
            if r <= hits {
                // y is a data point satisfying the optimality condition.
                return Ok(y);
            }
            let shrink = hits / r;
            t * (1.0 - shrink).max(0.0) + &y * shrink.min(1.0)
        } else {
            t
        };
        let next_obj = sum_distances(x, &next);
        let decrease = obj - next_obj;
        y = next;
        if decrease.abs() <= WEISZFELD_REL_TOL * obj {
            return Ok(snap_to_data_point(x, y, coincide));
        }
        obj = next_obj;
    }
    Err(Error::NoConvergence {
        iterations: WEISZFELD_MAX_ITER,
        last: y,
    })
}

/// Weiszfeld approaches an optimal data point only sublinearly; if the
/// nearest data point is itself optimal, return it exactly.
fn snap_to_data_point(x: &DMatrix<f64>, y: DVector<f64>, tol: f64) -> DVector<f64> {
    let (j, _) = x
        .row_iter()
        .map(|r| (r.transpose() - &y).norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n >= 1");
    if data_point_is_optimal(x, j, tol) {
        x.row(j).transpose()
    } else {
        y
    }
}

/// Scaled spatial sign covariance matrix `Λ̂`, with `tr(Λ̂) = p`.
///
/// Centered at `center` when given, otherwise at the spatial median. Rows
/// within `1e-12` (relative to the largest distance) of the center carry no
/// direction and are dropped, reducing `n` accordingly.
pub fn sscm(x: &DMatrix<f64>, center: Option<&DVector<f64>>) -> Result<CovMatrix> {
    sscm_counted(x, center).map(|(l, _)| l)
}

/// [`sscm`] together with the number of rows that entered it.
pub(crate) fn sscm_counted(
    x: &DMatrix<f64>,
    center: Option<&DVector<f64>>,
) -> Result<(CovMatrix, usize)> {
    let p = x.ncols();
    let mu = match center {
        Some(c) => {
            if c.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: c.len(),
                });
            }
            c.clone()
        }
        None => spatial_median(x)?,
    };
    let dists: Vec<f64> = x.row_iter().map(|r| (r.transpose() - &mu).norm()).collect();
    let max_d = dists.iter().copied().fold(0.0_f64, f64::max);
    if max_d == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut acc = DMatrix::zeros(p, p);
    let mut used = 0usize;
    for (row, &d) in x.row_iter().zip(&dists) {
        if d < 1e-12 * max_d {
            continue;
        }
        let u = (row.transpose() - &mu) / d;
        acc += &u * u.transpose();
        used += 1;
    }
    Ok((CovMatrix::from_symmetric(acc * (p as f64 / used as f64)), used))
}

/// Tapering template `W` (symmetric, unit diagonal, nonnegative entries)
/// together with its element-wise square root `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperTemplate {
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    label: String,
    all_ones: bool,
}

impl TaperTemplate {
    pub fn new(w: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let p = w.nrows();
        if w.ncols() != p {
            return Err(Error::InvalidTemplate(format!(
                "template must be square, got {}x{}",
                p,
                w.ncols()
            )));
        }
        for i in 0..p {
            if w[(i, i)] != 1.0 {
                return Err(Error::InvalidTemplate(format!(
                    "diagonal entry {i} is {} (must be 1)",
                    w[(i, i)]
                )));
            }
            for j in 0..p {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidTemplate(format!(
                        "entry ({i},{j}) = {v} is not a finite nonnegative number"
                    )));
                }
                if v != w[(j, i)] {
                    return Err(Error::InvalidTemplate(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        let v = w.map(f64::sqrt);
        let all_ones = w.iter().all(|&x| x == 1.0);
        Ok(Self {
            w,
            v,
            label: label.into(),
            all_ones,
        })
    }

    /// Banding template: `w_ij = 1` if `|i − j| < k`, else 0.
    pub fn banding(p: usize, k: usize) -> Result<Self> {
        if k == 0 || k > p {
            return Err(Error::InvalidTemplate(format!(
                "bandwidth must lie in [1, {p}], got {k}"
            )));
        }
        let w = DMatrix::from_fn(p, p, |i, j| if i.abs_diff(j) < k { 1.0 } else { 0.0 });
        Self::new(w, format!("band({k})"))
    }

    /// Linearly decaying taper of bandwidth `k`: weight 1 for `|i − j| ≤ k/2`,
    /// `2 − 2|i − j|/k` for `k/2 < |i − j| < k`, and 0 beyond.
    pub fn linear_taper(p: usize, k: usize) -> Result<Self> {
        if k == 0 || k > p {
            return Err(Error::InvalidTemplate(format!(
                "bandwidth must lie in [1, {p}], got {k}"
            )));
        }
        let half = k as f64 / 2.0;
        let w = DMatrix::from_fn(p, p, |i, j| {
            let d = i.abs_diff(j) as f64;
            if d <= half {
                1.0
            } else if d < k as f64 {
                2.0 - d / half
            } else {
                0.0
            }
        });
        Self::new(w, format!("taper({k})"))
    }

    pub fn all_ones(p: usize) -> Self {
        Self::new(DMatrix::from_element(p, p, 1.0), format!("band({p})")).expect("valid")
    }

    pub fn identity(p: usize) -> Self {
        Self::new(DMatrix::identity(p, p), "identity").expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Element-wise square root of `W`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_all_ones(&self) -> bool {
        self.all_ones
    }

    /// The template `V = √W`, itself a member of the admissible set.
    pub fn sqrt_template(&self) -> TaperTemplate {
        TaperTemplate {
            w: self.v.clone(),
            v: self.v.map(f64::sqrt),
            label: format!("sqrt({})", self.label),
            all_ones: self.all_ones,
        }
    }

    /// `W ∘ S`.
    pub fn apply(&self, s: &CovMatrix) -> CovMatrix {
        CovMatrix::from_symmetric(self.w.component_mul(s.as_matrix()))
    }
}

/// Hadamard product `W ∘ S`.
pub fn taper(w: &TaperTemplate, s: &CovMatrix) -> Result<CovMatrix> {
    if w.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: w.dim(),
        });
    }
    Ok(w.apply(s))
}
