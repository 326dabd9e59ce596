//! Bundled presets at reduced trial counts: theory against the Monte Carlo
//! mean. Heavy-tailed presets have too few finite moments for the standard
//! error itself to be reliable at small trial counts, so the 3 SE
//! comparison runs them with Gaussian sampling; the shipped distribution is
//! still run and checked for its exact theory anchors.

use shrinkcov_cli::output::{Cell, Table};
use shrinkcov_cli::simulate::simulate;
use shrinkcov_cli::spec::{Distribution, ExperimentSpec};

fn run(name: &str, trials: usize, gaussian: bool) -> Table {
    let mut spec = ExperimentSpec::preset(name).unwrap();
    spec.trials = trials;
    if gaussian {
        spec.distribution = Distribution::Gaussian;
    }
    simulate(&spec).unwrap()
}

/// Every cell within 4 SE and at most 1% of cells beyond 3 SE; a table of
/// hundreds of cells sees a few 3 SE excursions by chance alone.
fn agrees(t: &Table, prefix: &str) {
    let th = t.values(&format!("{prefix}_theory")).unwrap();
    let em = t.values(&format!("{prefix}_empirical")).unwrap();
    let se = t.values(&format!("{prefix}_se")).unwrap();
    let z: Vec<f64> = th
        .iter()
        .zip(&em)
        .zip(&se)
        .map(|((a, b), s)| if *s > 0.0 { (a - b).abs() / s } else { (a - b).abs() / a.abs().max(1e-300) })
        .collect();
    let max = z.iter().cloned().fold(0.0, f64::max);
    let over3 = z.iter().filter(|&&v| v > 3.0).count();
    assert!(max < 4.0, "{prefix}: max z {max}");
    assert!(over3 as f64 <= 0.01 * z.len() as f64, "{prefix}: {over3} of {} cells beyond 3 SE", z.len());
}

fn summary(t: &Table, key: &str) -> f64 {
    t.summary[key].as_f64().unwrap_or_else(|| panic!("{key} is not numeric"))
}

#[test]
fn fig1_theory_anchors_and_gaussian_agreement() {
    let t = run("fig1", 200, false);
    assert!((summary(&t, "beta0_n10") - 0.5487805).abs() < 1e-6);
    assert!((summary(&t, "mse_min_n10") - 0.4512195).abs() < 1e-6);
    let last = t.values("mse_theory").unwrap();
    assert!((last[100] - 0.822222).abs() < 1e-6);
    agrees(&run("fig1", 2000, true), "mse");
}

#[test]
fn fig3_tapered_nmse() {
    let t = run("fig3", 30, false);
    assert_eq!(t.summary["best_bandwidth_n100"], Cell::Int(6));
    assert!((summary(&t, "best_nmse_n100") - 0.089).abs() < 0.003);
    agrees(&t, "nmse");
}

#[test]
fn fig4_scm_and_oracle() {
    let t = run("fig4", 100, false);
    assert_eq!(t.rows.len(), 3 * 40);
    agrees(&t, "nmse_scm");
    agrees(&t, "nmse_oracle");
}

#[test]
fn setup_a_coupled_grid() {
    let t = run("setupA", 50, false);
    assert_eq!(t.rows.len(), 21 * 21);
    assert!((summary(&t, "oracle_alpha") - 0.309789).abs() < 1e-6);
    assert!((summary(&t, "oracle_beta") - 0.2048585).abs() < 1e-6);
    agrees(&run("setupA", 100, true), "nmse");
}

#[test]
fn compare_exact_rows() {
    let mut spec = ExperimentSpec::compare_default();
    spec.trials = 200;
    let t = simulate(&spec).unwrap();
    let kind = t.column("theory").unwrap();
    let mut exact = Table::new(&["nmse_theory", "nmse_empirical", "nmse_se"]);
    for r in &t.rows {
        if r[kind] == Cell::Text("exact".into()) {
            let pick = |c: &str| r[t.column(c).unwrap()].clone();
            exact.push(vec![pick("nmse_theory"), pick("nmse_empirical"), pick("nmse_se")]);
        }
    }
    assert!(!exact.rows.is_empty());
    agrees(&exact, "nmse");
}
