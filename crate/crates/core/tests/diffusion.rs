//! Simulator and sufficient-statistic checks against ergodic oracles.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use torus_bvm::basis::RealBasis;
use torus_bvm::field::GridFunction;
use torus_bvm::functionals::invariant_measure;
use torus_bvm::posterior::sufficient_statistics;
use torus_bvm::rng::generator;
use torus_bvm::sde::{simulate, simulate_driven, FlatPotential, GroundTruth, TruthId};
use torus_bvm::stats;

#[test]
fn coarse_and_fine_paths_agree() {
    let truth = GroundTruth::new(TruthId::B1);
    let (fine_dt, factor) = (1e-4_f64, 10);
    let steps = 10_000;
    let mut gen = generator(41);
    let fine: Vec<f64> = (0..2 * steps).map(|_| fine_dt.sqrt() * gen.sample::<f64, _>(StandardNormal)).collect();
    // coarse step r sums the fine increments of steps r*factor .. (r+1)*factor, per axis
    let coarse: Vec<f64> = (0..steps / factor)
        .flat_map(|r| {
            let block = &fine[2 * r * factor..2 * (r + 1) * factor];
            [block.iter().step_by(2).sum::<f64>(), block.iter().skip(1).step_by(2).sum::<f64>()]
        })
        .collect();
    let a = simulate_driven(&truth, &[1.0, 1.0], fine_dt, steps, fine, 0).unwrap();
    let b = simulate_driven(&truth, &[1.0, 1.0], fine_dt * factor as f64, steps / factor, coarse, 0).unwrap();
    let gap = a.endpoint().iter().zip(b.endpoint()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(gap < 0.2, "endpoint gap {gap}");
}

#[test]
fn flat_potential_time_average_matches_uniform_law() {
    let traj = simulate(&FlatPotential(2), &[1.0, 1.0], 200.0, 1e-3, 42).unwrap();
    let avg = (0..traj.steps()).map(|r| (2.0 * PI * traj.point(r)[0]).cos()).sum::<f64>() / traj.steps() as f64;
    assert!(avg.abs() <= 0.1, "{avg}");
}

#[test]
fn flat_increments_have_unit_variance() {
    let dt = 1e-3;
    let traj = simulate(&FlatPotential(2), &[0.5, 0.5], 100.0, dt, 43).unwrap();
    let z: Vec<f64> = traj.noise().unwrap().iter().map(|v| v / dt.sqrt()).collect();
    assert!(z.len() >= 100_000);
    let var = stats::sample_variance(&z);
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn flat_gram_diagonal_grows_like_laplacian_eigenvalue() {
    let basis = RealBasis::new(2, 2);
    let traj = simulate(&FlatPotential(2), &[1.0, 1.0], 200.0, 1e-3, 44).unwrap();
    let (sigma, _) = sufficient_statistics(&traj, &basis).unwrap();
    for j in 0..basis.len() {
        let k2: f64 = basis.frequency(j).iter().map(|&k| (k * k) as f64).sum();
        let want = 4.0 * PI * PI * k2;
        let got = sigma[(j, j)] / traj.horizon();
        assert!((got - want).abs() < 0.1 * want, "mode {:?}: {got} vs {want}", basis.frequency(j));
    }
}

#[test]
fn drift_statistic_matches_weighted_inner_product() {
    let basis = RealBasis::new(2, 1);
    let coords = [0.4, -0.3, 0.2, 0.1, -0.2, 0.15, 0.05, -0.1];
    let b0 = basis.to_field(&coords);
    let n = 64;
    let mu = invariant_measure(&b0, n).unwrap();
    let grad_b0: Vec<GridFunction> = b0.gradient().iter().map(|g| g.to_grid(n).unwrap()).collect();
    let reps = 10;
    let eval = b0.evaluator();
    let samples: Vec<Vec<f64>> = (0..reps)
        .map(|r| {
            let traj = simulate(&eval, &[1.0, 1.0], 200.0, 1e-3, 500 + r).unwrap();
            let (_, h) = sufficient_statistics(&traj, &basis).unwrap();
            h.iter().map(|v| v / traj.horizon()).collect()
        })
        .collect();
    for j in 0..basis.len() {
        let mut coords = vec![0.0; basis.len()];
        coords[j] = 1.0;
        let phi = basis.to_field(&coords);
        let grad_phi: Vec<GridFunction> = phi.gradient().iter().map(|g| g.to_grid(n).unwrap()).collect();
        let dot = grad_phi[0]
            .zip_with(&grad_b0[0], |a, b| a * b)
            .zip_with(&grad_phi[1].zip_with(&grad_b0[1], |a, b| a * b), |a, b| a + b);
        let want = dot.inner(mu.density());
        let hj: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let se = (stats::sample_variance(&hj) / reps as f64).sqrt();
        let got = stats::mean(&hj);
        assert!((got - want).abs() <= 3.0 * se, "mode {j}: {got} vs {want} (se {se})");
    }
}
