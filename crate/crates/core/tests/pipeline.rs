//! End-to-end checks across priors, posterior, solver and the harness.

use torus_bvm::basis::RealBasis;
use torus_bvm::experiments::{
    emit_outputs, read_rows, read_table, run_experiment, ExperimentConfig, ROWS_SCHEMA, TABLE_SCHEMA,
};
use torus_bvm::field::GridFunction;
use torus_bvm::functionals::FunctionalSpec;
use torus_bvm::pde::{efficient_variance, Resolution};
use torus_bvm::posterior::{conjugate_posterior, sufficient_statistics};
use torus_bvm::priors::{MaternPrior, VarianceConvention};
use torus_bvm::rng::derive_seed;
use torus_bvm::sde::{simulate, GroundTruth, TruthId};
use torus_bvm::stats;

#[test]
fn posterior_mean_contracts_as_horizon_doubles() {
    let basis = RealBasis::new(2, 2);
    let coords: Vec<f64> = (0..basis.len()).map(|j| if j % 3 == 0 { 0.3 } else { -0.1 }).collect();
    let b0 = basis.to_field(&coords).evaluator();
    let error = |t: f64| {
        let prior = MaternPrior::new(2, 3.0, 2, t).with_convention(VarianceConvention::Printed);
        let errs: Vec<f64> = (0..10)
            .map(|r| {
                let traj = simulate(&b0, &[1.0, 1.0], t, 1e-3, derive_seed(3, &[t as u64, r])).unwrap();
                let (sigma, h) = sufficient_statistics(&traj, &basis).unwrap();
                let post = conjugate_posterior(&sigma, &h, &prior.variances()).unwrap();
                post.mean().iter().zip(&coords).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        stats::median(&errs)
    };
    let (e1, e2) = (error(10.0), error(20.0));
    assert!(e2 < e1, "{e1} -> {e2}");
}

#[test]
fn matern_sobolev_norm_is_stable_in_truncation() {
    let medians: Vec<f64> = [2usize, 4, 8]
        .iter()
        .map(|&k| {
            let prior = MaternPrior::new(2, 3.0, k, 1.0);
            let norms: Vec<f64> = (0..200).map(|i| prior.sample(derive_seed(17, &[i])).sobolev_norm(1.5)).collect();
            assert!(norms.iter().all(|v| v.is_finite()));
            stats::median(&norms)
        })
        .collect();
    let (lo, hi) = medians.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi <= 2.0 * lo, "{medians:?}");
}

#[test]
fn efficient_variance_is_stable_in_galerkin_cutoff() {
    let n = 128;
    let raw = GridFunction::sample(&GroundTruth::new(TruthId::B1), n);
    let mean = raw.integrate();
    let b0 = raw.map(|v| v - mean);
    let spec = FunctionalSpec::PowerB { q: 2 };
    let v = |kg: usize| {
        let res = Resolution { grid: n, representor_cutoff: 6, galerkin_cutoff: kg };
        efficient_variance(&b0, &spec, res).unwrap().variance
    };
    let (v8, v16) = (v(8), v(16));
    assert!((v16 - v8).abs() < 0.01 * v16, "{v8} vs {v16}");
}

#[test]
fn emitted_outputs_round_trip() {
    let mut config = ExperimentConfig::desk();
    config.truths = vec![TruthId::B2];
    config.horizons = vec![2.0, 4.0];
    config.replications = 2;
    config.samples = 40;
    let report = run_experiment(&config, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&report, &config, dir.path()).unwrap();
    assert!(written.iter().all(|p| p.exists()));

    let rows_path = dir.path().join("rows.csv");
    let table_path = dir.path().join("table1.csv");
    let first_line = |p: &std::path::Path| std::fs::read_to_string(p).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first_line(&rows_path), ROWS_SCHEMA);
    assert_eq!(first_line(&table_path), TABLE_SCHEMA);
    assert_eq!(read_rows(&rows_path).unwrap(), report.rows);
    assert_eq!(read_table(&table_path).unwrap(), report.cells);

    assert!(dir.path().join("surfaces/B2_truth.csv").exists());
    assert!(dir.path().join("surfaces/B2_T4_mean.csv").exists());
    assert!(dir.path().join("histograms/B2_T2_power_B_q_4.csv").exists());
    let script = std::fs::read_to_string(dir.path().join("plot.gp")).unwrap();
    assert!(script.contains("'surfaces/B2_truth.csv'"));
    assert!(!script.contains(&dir.path().display().to_string()));
}

#[test]
fn every_interval_brackets_its_median() {
    let mut config = ExperimentConfig::desk();
    config.truths = vec![TruthId::B1];
    config.horizons = vec![5.0];
    config.replications = 4;
    config.samples = 100;
    config.bvm = false;
    let report = run_experiment(&config, false).unwrap();
    for row in report.rows.iter().filter(|r| r.ok) {
        let (lo, med, hi) = (row.ci_lower.unwrap(), row.post_median.unwrap(), row.ci_upper.unwrap());
        assert!(lo <= med && med <= hi, "{row:?}");
    }
    for cell in &report.cells {
        let c = cell.coverage.unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
}
