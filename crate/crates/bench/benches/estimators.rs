use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use shrinkcov::models::{ar1_cov, cai_cov};
use shrinkcov::qp::{self, QpProblem};
use shrinkcov::rscm::rscm;
use shrinkcov::scm::scm;
use shrinkcov::tabasco::tabasco;
use shrinkcov::theory::nmse_tapered;
use shrinkcov::{EllipticalModel, Family, MomentContext, SphericityMethod, TaperTemplate, TemplateSet};

fn data(n: usize, p: usize) -> DMatrix<f64> {
    let model = EllipticalModel::centered(ar1_cov(1.0, 0.5, p).unwrap(), Family::StudentT { dof: 5.0 }).unwrap();
    model.sample(n, 1)
}

fn bench_scm(c: &mut Criterion) {
    let mut g = c.benchmark_group("scm");
    for p in [20, 100] {
        let x = data(2 * p, p);
        g.bench_with_input(BenchmarkId::from_parameter(p), &x, |b, x| b.iter(|| scm(x).unwrap()));
    }
    g.finish();
}

fn bench_rscm(c: &mut Criterion) {
    let x = data(100, 50);
    c.bench_function("rscm/ell1", |b| b.iter(|| rscm(&x, SphericityMethod::Ell1).unwrap()));
    c.bench_function("rscm/ell2", |b| b.iter(|| rscm(&x, SphericityMethod::Ell2).unwrap()));
}

fn bench_tabasco(c: &mut Criterion) {
    let x = data(100, 50);
    let set = TemplateSet::default_for(50).unwrap();
    c.bench_function("tabasco/default_grid_p50", |b| b.iter(|| tabasco(&x, &set).unwrap()));
}

fn bench_qp(c: &mut Criterion) {
    let m = 8;
    let a = DMatrix::from_fn(m, m, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
    let q = &a * a.transpose() + DMatrix::identity(m, m) * 0.1;
    let rhs = DVector::from_fn(m, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
    let prob = QpProblem::with_bounds(q, rhs, DVector::zeros(m), false).unwrap();
    c.bench_function("qp/nonneg_m8", |b| b.iter(|| qp::solve(&prob).unwrap()));
}

fn bench_tapered_theory(c: &mut Criterion) {
    let p = 250;
    let sigma = cai_cov(0.6, 0.1, p).unwrap();
    let ctx = MomentContext::new(100, 0.0).unwrap();
    let templates: Vec<TaperTemplate> = (2..=20).step_by(2).map(|k| TaperTemplate::linear_taper(p, k).unwrap()).collect();
    c.bench_function("theory/tapered_nmse_p250_10k", |b| {
        b.iter(|| templates.iter().map(|w| nmse_tapered(w, &sigma, &ctx).unwrap()).sum::<f64>())
    });
}

criterion_group!(benches, bench_scm, bench_rscm, bench_tabasco, bench_qp, bench_tapered_theory);
criterion_main!(benches);
