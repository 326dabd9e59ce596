//! Monte Carlo experiments: theory next to empirical means with standard
//! errors, one table per experiment.

use nalgebra::DMatrix;
use shrinkcov::mc;
use shrinkcov::models::{ar1_cov, ar1_rho_for_sphericity};
use shrinkcov::multiclass::{coupled_mse, coupled_oracle, coupled_plugin};
use shrinkcov::rscm::{oracle_for, rscm, shrink};
use shrinkcov::scm::{pool, scm};
use shrinkcov::tabasco::{select_template, tabasco, tabasco_mse};
use shrinkcov::theory::{beta0_1d, nmse_scm, nmse_tapered, scaled_variance_mse};
use shrinkcov::{
    ClassPanel, ClassScalars, CovMatrix, EllipticalModel, MomentContext, SphericityMethod, TemplateSet,
};

use crate::error::{CliError, Result};
use crate::grid::{bandwidth, parse_f64_list, parse_template_grid, RealList};
use crate::output::{Cell, Table};
use crate::spec::{ExperimentSpec, Kind};
use crate::Method;

/// Seed of configuration `config`; trial `i` then uses `seed + i`, so the
/// offset keeps the trial streams of different configurations apart.
fn config_seed(seed: u64, config: usize) -> u64 {
    seed ^ (config as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn grid_or(list: &Option<RealList>, default: &str) -> Result<Vec<f64>> {
    match list {
        Some(l) => l.resolve(),
        None => parse_f64_list(default),
    }
}

fn sq_dist(a: &DMatrix<f64>, b: &CovMatrix) -> f64 {
    (a - b.as_matrix()).norm_squared()
}

pub fn simulate(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let mut table = match spec.kind {
        Kind::ScaledVariance => scaled_variance(spec)?,
        Kind::Tapered => tapered(spec)?,
        Kind::RscmOracle => rscm_oracle(spec)?,
        Kind::Coupled => coupled(spec)?,
        Kind::Compare => compare(spec)?,
    };
    table.summary.insert("trials".into(), spec.trials.into());
    table.summary.insert("seed".into(), Cell::Text(spec.seed.to_string()));
    Ok(table)
}

fn scaled_variance(spec: &ExperimentSpec) -> Result<Table> {
    let family = spec.distribution.family();
    let kurt = family.marginal_excess_kurtosis()?;
    let betas = grid_or(&spec.beta, "0:0.01:1")?;
    let model = EllipticalModel::centered(CovMatrix::identity(1), family)?;
    let mut t = Table::new(&[
        "n",
        "beta",
        "mse_theory",
        "bias2_theory",
        "var_theory",
        "mse_empirical",
        "mse_se",
    ]);
    for (c, n) in spec.n.resolve(None)?.into_iter().enumerate() {
        if n < 2 {
            return Err(CliError::Usage(format!("n must be at least 2, got {n}")));
        }
        let res = mc::run(spec.trials, config_seed(spec.seed, c), |rng| {
            let s2 = scm(&model.sample_with(n, rng))?.get(0, 0);
            Ok(betas.iter().map(|b| (b * s2 - 1.0).powi(2)).collect())
        })?;
        for (i, &b) in betas.iter().enumerate() {
            let th = scaled_variance_mse(b, 1.0, kurt, n);
            t.push(vec![
                n.into(),
                b.into(),
                th.mse.into(),
                th.bias2.into(),
                th.var.into(),
                res.mean[i].into(),
                res.se[i].into(),
            ]);
        }
        let b0 = beta0_1d(kurt, n);
        t.summary.insert(format!("beta0_n{n}"), b0.into());
        t.summary
            .insert(format!("mse_min_n{n}"), scaled_variance_mse(b0, 1.0, kurt, n).mse.into());
    }
    Ok(t)
}

fn template_set(spec: &ExperimentSpec, p: usize) -> Result<TemplateSet> {
    match &spec.templates {
        Some(s) => parse_template_grid(s, p),
        None => Ok(TemplateSet::default_for(p)?),
    }
}

fn tapered(spec: &ExperimentSpec) -> Result<Table> {
    let p = spec.p.expect("validated");
    let sigma = spec.model.covariance(p)?;
    let family = spec.distribution.family();
    let kappa = family.kurtosis()?;
    let set = template_set(spec, p)?;
    let fro2 = sigma.fro2();
    let model = EllipticalModel::centered(sigma.clone(), family)?;
    let mut t = Table::new(&[
        "n",
        "template",
        "bandwidth",
        "nmse_theory",
        "nmse_empirical",
        "nmse_se",
    ]);
    for (c, n) in spec.n.resolve(Some(p))?.into_iter().enumerate() {
        let ctx = MomentContext::with_dim(n, kappa, p)?;
        let theory = set
            .templates()
            .iter()
            .map(|w| nmse_tapered(w, &sigma, &ctx))
            .collect::<shrinkcov::Result<Vec<_>>>()?;
        let res = mc::run(spec.trials, config_seed(spec.seed, c), |rng| {
            let s = scm(&model.sample_with(n, rng))?;
            Ok(set
                .templates()
                .iter()
                .map(|w| {
                    let err: f64 = w
                        .w()
                        .iter()
                        .zip(s.as_matrix().iter())
                        .zip(sigma.as_matrix().iter())
                        .map(|((w, s), m)| (w * s - m).powi(2))
                        .sum();
                    err / fro2
                })
                .collect())
        })?;
        let mut best = 0;
        for (i, w) in set.templates().iter().enumerate() {
            if theory[i] < theory[best] {
                best = i;
            }
            t.push(vec![
                n.into(),
                w.label().into(),
                bandwidth(w).map_or(Cell::Empty, Cell::Int),
                theory[i].into(),
                res.mean[i].into(),
                res.se[i].into(),
            ]);
        }
        let w = set.get(best);
        t.summary.insert(format!("best_template_n{n}"), w.label().into());
        if let Some(k) = bandwidth(w) {
            t.summary.insert(format!("best_bandwidth_n{n}"), k.into());
        }
        t.summary.insert(format!("best_nmse_n{n}"), theory[best].into());
        t.summary
            .insert(format!("nmse_scm_n{n}"), nmse_scm(p, sigma.sphericity(), &ctx).into());
    }
    Ok(t)
}

fn rscm_oracle(spec: &ExperimentSpec) -> Result<Table> {
    let p = spec.p.expect("validated");
    let family = spec.distribution.family();
    let kappa = family.kurtosis()?;
    let configs: Vec<(f64, Option<f64>, CovMatrix)> = match &spec.sphericity {
        Some(list) => list
            .resolve()?
            .into_iter()
            .map(|g| {
                let rho = ar1_rho_for_sphericity(g, p)?;
                Ok((g, Some(rho), ar1_cov(1.0, rho, p)?))
            })
            .collect::<Result<_>>()?,
        None => {
            let sigma = spec.model.covariance(p)?;
            vec![(sigma.sphericity(), None, sigma)]
        }
    };
    let ns = spec.n.resolve(Some(p))?;
    let mut t = Table::new(&[
        "gamma",
        "rho",
        "n",
        "beta0",
        "alpha0",
        "nmse_scm_theory",
        "nmse_scm_empirical",
        "nmse_scm_se",
        "nmse_oracle_theory",
        "nmse_oracle_empirical",
        "nmse_oracle_se",
    ]);
    let mut config = 0;
    for (gamma, rho, sigma) in &configs {
        let fro2 = sigma.fro2();
        let model = EllipticalModel::centered(sigma.clone(), family)?;
        for &n in &ns {
            let ctx = MomentContext::with_dim(n, kappa, p)?;
            let (a0, b0, nmse_o) = oracle_for(sigma, &ctx)?;
            let res = mc::run(spec.trials, config_seed(spec.seed, config), |rng| {
                let s = scm(&model.sample_with(n, rng))?;
                Ok(vec![
                    sq_dist(s.as_matrix(), sigma) / fro2,
                    sq_dist(shrink(&s, a0, b0).as_matrix(), sigma) / fro2,
                ])
            })?;
            config += 1;
            t.push(vec![
                (*gamma).into(),
                (*rho).into(),
                n.into(),
                b0.into(),
                a0.into(),
                nmse_scm(p, sigma.sphericity(), &ctx).into(),
                res.mean[0].into(),
                res.se[0].into(),
                nmse_o.into(),
                res.mean[1].into(),
                res.se[1].into(),
            ]);
        }
    }
    Ok(t)
}

fn coupled(spec: &ExperimentSpec) -> Result<Table> {
    let p = spec.p.expect("validated");
    let ns = spec.n.resolve(None)?;
    let k = ns.len();
    let rhos = spec
        .class_rho
        .as_ref()
        .ok_or_else(|| CliError::Spec("kind = \"coupled\" needs class_rho".into()))?;
    if rhos.len() != k {
        return Err(CliError::Spec(format!(
            "class_rho has {} entries but n has {k}",
            rhos.len()
        )));
    }
    let class = spec.class.unwrap_or(k - 1);
    if class >= k {
        return Err(CliError::Spec(format!("class {class} out of range for {k} classes")));
    }
    let family = spec.distribution.family();
    let kappa = family.kurtosis()?;
    let sigmas: Vec<CovMatrix> = rhos.iter().map(|&r| ar1_cov(1.0, r, p)).collect::<shrinkcov::Result<_>>()?;
    let sc = ClassScalars::from_population(&sigmas, &ns, &vec![kappa; k])?;
    let alphas = grid_or(&spec.alpha, "0:0.1:1")?;
    let betas = grid_or(&spec.beta, "0:0.1:1")?;
    let models: Vec<EllipticalModel> = sigmas
        .iter()
        .map(|s| EllipticalModel::centered(s.clone(), family))
        .collect::<shrinkcov::Result<_>>()?;
    let target = &sigmas[class];
    let fro2 = target.fro2();
    let nb = betas.len();
    let grid_len = alphas.len() * nb;
    let res = mc::run(spec.trials, config_seed(spec.seed, 0), |rng| {
        let classes = models.iter().zip(&ns).map(|(m, &n)| m.sample_with(n, rng)).collect();
        let panel = ClassPanel::new(classes)?;
        let scms = panel.class_scms()?;
        let pooled = pool(&scms, &panel.proportions());
        let mut out = vec![0.0; grid_len + 3];
        let eye = DMatrix::<f64>::identity(p, p);
        for (ib, &b) in betas.iter().enumerate() {
            // ‖α(M − tI) + (tI − Σ)‖² expanded in α.
            let m = scms[class].combine(b, &pooled, 1.0 - b);
            let tr = m.scale();
            let x = m.as_matrix() - &eye * tr;
            let y = &eye * tr - target.as_matrix();
            let (xx, xy, yy) = (x.norm_squared(), x.dot(&y), y.norm_squared());
            for (ia, &a) in alphas.iter().enumerate() {
                out[ia * nb + ib] = (a * a * xx + 2.0 * a * xy + yy) / fro2;
            }
        }
        let est = coupled_plugin(&panel)?.swap_remove(class);
        out[grid_len] = est.alpha;
        out[grid_len + 1] = est.beta;
        out[grid_len + 2] = sq_dist(est.estimate.as_matrix(), target) / fro2;
        Ok(out)
    })?;
    let mut t = Table::new(&["alpha", "beta", "nmse_theory", "nmse_empirical", "nmse_se"]);
    let ckk = sc.c[(class, class)];
    for (ia, &a) in alphas.iter().enumerate() {
        for (ib, &b) in betas.iter().enumerate() {
            let i = ia * nb + ib;
            t.push(vec![
                a.into(),
                b.into(),
                (coupled_mse(class, &sc, a, b)? / ckk).into(),
                res.mean[i].into(),
                res.se[i].into(),
            ]);
        }
    }
    let (a, b, mse) = coupled_oracle(class, &sc)?;
    t.summary.insert("class".into(), class.into());
    t.summary.insert("oracle_alpha".into(), a.into());
    t.summary.insert("oracle_beta".into(), b.into());
    t.summary.insert("oracle_nmse".into(), (mse / ckk).into());
    t.summary.insert("estimated_alpha_mean".into(), res.mean[grid_len].into());
    t.summary.insert("estimated_beta_mean".into(), res.mean[grid_len + 1].into());
    t.summary.insert("estimated_nmse_mean".into(), res.mean[grid_len + 2].into());
    t.summary.insert("estimated_nmse_se".into(), res.se[grid_len + 2].into());
    Ok(t)
}

pub const COMPARE_DEFAULT: [Method; 4] = [Method::Scm, Method::RscmEll1, Method::RscmEll2, Method::Tabasco];

fn compare(spec: &ExperimentSpec) -> Result<Table> {
    let p = spec.p.expect("validated");
    let methods = spec.methods.clone().unwrap_or_else(|| COMPARE_DEFAULT.to_vec());
    if let Some(m) = methods.iter().find(|m| m.is_multiclass()) {
        return Err(CliError::Usage(format!(
            "method {} needs several classes; use kind = \"coupled\" or the estimate command. \
             Valid here: scm, rscm-ell1, rscm-ell2, tabasco",
            m.name()
        )));
    }
    let sigma = spec.model.covariance(p)?;
    let fro2 = sigma.fro2();
    let family = spec.distribution.family();
    let kappa = family.kurtosis()?;
    let model = EllipticalModel::centered(sigma.clone(), family)?;
    let set = template_set(spec, p)?;
    let mut t = Table::new(&[
        "n",
        "method",
        "nmse_empirical",
        "nmse_se",
        "beta_mean",
        "nmse_theory",
        "theory",
    ]);
    for (c, n) in spec.n.resolve(Some(p))?.into_iter().enumerate() {
        let ctx = MomentContext::with_dim(n, kappa, p)?;
        let res = mc::run(spec.trials, config_seed(spec.seed, c), |rng| {
            let x = model.sample_with(n, rng);
            let mut out = Vec::with_capacity(2 * methods.len());
            for m in &methods {
                let (est, beta) = match m {
                    Method::RscmEll1 | Method::RscmEll2 => {
                        let sph = if *m == Method::RscmEll1 {
                            SphericityMethod::Ell1
                        } else {
                            SphericityMethod::Ell2
                        };
                        let r = rscm(&x, sph)?;
                        (r.estimate, r.beta)
                    }
                    Method::Tabasco => {
                        let r = tabasco(&x, &set)?;
                        (r.estimate, r.beta)
                    }
                    _ => (scm(&x)?, 1.0),
                };
                out.push(sq_dist(est.as_matrix(), &sigma) / fro2);
                out.push(beta);
            }
            Ok(out)
        })?;
        for (i, m) in methods.iter().enumerate() {
            let (theory, label) = match m {
                Method::RscmEll1 | Method::RscmEll2 => (oracle_for(&sigma, &ctx)?.2, "oracle"),
                Method::Tabasco => {
                    let best = select_template(&set, &sigma, &ctx)?;
                    (tabasco_mse(best.beta, set.get(best.index), &sigma, &ctx)? / fro2, "oracle")
                }
                _ => (nmse_scm(p, sigma.sphericity(), &ctx), "exact"),
            };
            t.push(vec![
                n.into(),
                m.name().into(),
                res.mean[2 * i].into(),
                res.se[2 * i].into(),
                if *m == Method::Scm { Cell::Empty } else { res.mean[2 * i + 1].into() },
                theory.into(),
                label.into(),
            ]);
        }
    }
    Ok(t)
}
