//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random symmetric positive definite matrix `AAᵀ/m + ridge·I`.
pub fn random_pd<R: Rng>(m: usize, ridge: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * ridge;
    (&q + q.transpose()) * 0.5
}

/// Exhaustive active-set oracle for `min ½aᵀQa − bᵀa` s.t. `a ≥ l`
/// (entries of `l` may be −∞) and optionally `1ᵀa = 1`.
///
/// Every pattern of bounds held at equality is solved as an equality
/// constrained problem; the best feasible one is the global minimizer.
pub fn brute_force_qp(q: &DMatrix<f64>, b: &DVector<f64>, l: &DVector<f64>, sum_to_one: bool) -> DVector<f64> {
    let m = b.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        if (0..m).any(|i| mask & (1 << i) != 0 && !l[i].is_finite()) {
            continue;
        }
        let fixed: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..m).filter(|i| mask & (1 << i) == 0).collect();
        let mut x = DVector::zeros(m);
        for &i in &fixed {
            x[i] = l[i];
        }
        let f = free.len();
        let extra = usize::from(sum_to_one);
        if f == 0 {
            if sum_to_one && (x.sum() - 1.0).abs() > 1e-9 {
                continue;
            }
        } else {
            // KKT system on the free block.
            let size = f + extra;
            let mut kkt = DMatrix::zeros(size, size);
            let mut rhs = DVector::zeros(size);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    kkt[(r, c)] = q[(i, j)];
                }
                rhs[r] = b[i] - fixed.iter().map(|&j| q[(i, j)] * l[j]).sum::<f64>();
                if sum_to_one {
                    kkt[(r, f)] = 1.0;
                    kkt[(f, r)] = 1.0;
                }
            }
            if sum_to_one {
                rhs[f] = 1.0 - fixed.iter().map(|&j| l[j]).sum::<f64>();
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                x[i] = sol[r];
            }
        }
        if (0..m).any(|i| x[i] < l[i] - 1e-12) {
            continue;
        }
        let val = 0.5 * x.dot(&(q * &x)) - b.dot(&x);
        if best.as_ref().map_or(true, |(v, _)| val < *v) {
            best = Some((val, x));
        }
    }
    best.expect("feasible problem").1
}

/// Argmin of `f` over an `m × m` grid on `[0,1]²`, with the grid spacing.
pub fn grid_argmin(m: usize, f: impl Fn(f64, f64) -> f64) -> ((f64, f64), f64, f64) {
    let h = 1.0 / (m - 1) as f64;
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for i in 0..m {
        for j in 0..m {
            let (a, b) = (i as f64 * h, j as f64 * h);
            let v = f(a, b);
            if v < best.1 {
                best = ((a, b), v);
            }
        }
    }
    (best.0, best.1, h)
}

/// Grid argmin on `[0,1]²` refined by repeated local grids around the
/// incumbent, resolving minimizers to about `1e-9`.
pub fn refined_argmin(f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let ((mut a, mut b), _, mut h) = grid_argmin(201, &f);
    for _ in 0..8 {
        let (lo_a, hi_a) = ((a - 2.0 * h).max(0.0), (a + 2.0 * h).min(1.0));
        let (lo_b, hi_b) = ((b - 2.0 * h).max(0.0), (b + 2.0 * h).min(1.0));
        let mut best = (f(a, b), a, b);
        for i in 0..=40 {
            for j in 0..=40 {
                let x = lo_a + (hi_a - lo_a) * i as f64 / 40.0;
                let y = lo_b + (hi_b - lo_b) * j as f64 / 40.0;
                let v = f(x, y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        (a, b) = (best.1, best.2);
        h /= 10.0;
    }
    (a, b)
}
