//! Conjugate Gaussian posterior for the real basis coordinates of `B`.
//!
//! With `Sigma = int grad phi_j . grad phi_l dt` and
//! `H = int grad phi_j . dX`, a `N(0, diag(v))` prior gives
//! `N(P^{-1} H, P^{-1})` with `P = Sigma + diag(1/v)`. Both integrals are
//! left-point Riemann sums over the trajectory.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::RealBasis;
use crate::error::{Error, Result};
use crate::field::{FourierField, GridFunction};
use crate::rng;
use crate::sde::Trajectory;

/// Steps processed per GEMM block.
const CHUNK: usize = 512;

fn check_dims(traj: &Trajectory, basis: &RealBasis) -> Result<()> {
    if traj.dim() != basis.dim() {
        return Err(Error::Input(format!(
            "trajectory dimension {} does not match basis dimension {}",
            traj.dim(),
            basis.dim()
        )));
    }
    Ok(())
}

/// Running left-point sums of `Sigma` and `H` over `(x_r, x_{r+1} - x_r)`
/// pairs, which need not come from a single path.
pub struct StatisticsAccumulator<'a> {
    basis: &'a RealBasis,
    dt: f64,
    sigma: DMatrix<f64>,
    h: DVector<f64>,
    g: DMatrix<f64>,
    dx: DVector<f64>,
    filled: usize,
    block: Vec<f64>,
}

impl<'a> StatisticsAccumulator<'a> {
    pub fn new(basis: &'a RealBasis, dt: f64) -> Self {
        let m = basis.len();
        let d = basis.dim();
        Self {
            basis,
            dt,
            sigma: DMatrix::zeros(m, m),
            h: DVector::zeros(m),
            g: DMatrix::zeros(m, d * CHUNK),
            dx: DVector::zeros(d * CHUNK),
            filled: 0,
            block: vec![0.0; m * d],
        }
    }

    pub fn push(&mut self, x: &[f64], increment: &[f64]) {
        let d = self.basis.dim();
        self.basis.gradients_at(x, &mut self.block);
        let t = self.filled;
        self.g.columns_mut(t * d, d).copy_from_slice(&self.block);
        for i in 0..d {
            self.dx[t * d + i] = increment[i];
        }
        self.filled += 1;
        if self.filled == CHUNK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.filled == 0 {
            return;
        }
        let cols = self.filled * self.basis.dim();
        let g = self.g.columns(0, cols);
        self.sigma.gemm(self.dt, &g, &g.transpose(), 1.0);
        self.h.gemv(1.0, &g, &self.dx.rows(0, cols), 1.0);
        self.filled = 0;
    }

    pub fn finish(mut self) -> (DMatrix<f64>, DVector<f64>) {
        self.flush();
        symmetrize(&mut self.sigma);
        (self.sigma, self.h)
    }
}

/// Accumulates `Sigma` and `H` in one pass over the trajectory.
pub fn sufficient_statistics(traj: &Trajectory, basis: &RealBasis) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dims(traj, basis)?;
    let d = traj.dim();
    let mut acc = StatisticsAccumulator::new(basis, traj.dt());
    let mut dx = vec![0.0; d];
    for r in 0..traj.steps() {
        let (x, next) = (traj.point(r), traj.point(r + 1));
        for i in 0..d {
            dx[i] = next[i] - x[i];
        }
        acc.push(x, &dx);
    }
    Ok(acc.finish())
}

/// `Sigma_{jl} = sum_r grad phi_j(x_r) . grad phi_l(x_r) dt`.
pub fn gram_matrix(traj: &Trajectory, basis: &RealBasis) -> Result<DMatrix<f64>> {
    sufficient_statistics(traj, basis).map(|(s, _)| s)
}

/// `H_j = sum_r grad phi_j(x_r) . (x_{r+1} - x_r)`.
pub fn drift_vector(traj: &Trajectory, basis: &RealBasis) -> Result<DVector<f64>> {
    sufficient_statistics(traj, basis).map(|(_, h)| h)
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.abs().max().max(f64::MIN_POSITIVE);
    (a - a.transpose()).abs().max() / scale
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// Cholesky with one jittered retry.
fn robust_cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let m = a.nrows();
    let jitter = 1e-10 * a.trace() / m as f64;
    let shifted = a + DMatrix::identity(m, m) * jitter;
    Cholesky::new(shifted).ok_or_else(|| Error::Conditioning {
        min_eigenvalue: min_eigenvalue(a),
    })
}

#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    /// Lower Cholesky factor of the covariance `P^{-1}`.
    cov_factor: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn cov_factor(&self) -> &DMatrix<f64> {
        &self.cov_factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.cov_factor.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `M` draws as the columns of an `m x M` matrix.
    pub fn sample_coords(&self, seed: u64, count: usize) -> DMatrix<f64> {
        let m = self.len();
        let mut gen = rng::generator(seed);
        let z = DMatrix::from_fn(m, count, |_, _| gen.sample::<f64, _>(StandardNormal));
        let mut out = &self.cov_factor * z;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }

    /// `M` draws mapped back to zero-mean Fourier fields.
    pub fn sample(&self, basis: &RealBasis, seed: u64, count: usize) -> Vec<FourierField> {
        self.sample_coords(seed, count)
            .column_iter()
            .map(|c| basis.to_field(c.as_slice()))
            .collect()
    }

    pub fn mean_field(&self, basis: &RealBasis) -> FourierField {
        basis.to_field(self.mean.as_slice())
    }

    /// Writes the posterior mean on an `n^d` grid as `x1..xd,value`.
    pub fn write_mean_grid(&self, basis: &RealBasis, n: usize, path: &Path) -> Result<()> {
        let grid = self.mean_field(basis).to_grid(n)?;
        write_grid_csv(&grid, path)
    }

    /// Writes `j,k1..kd,kind,variance` per basis coordinate.
    pub fn write_variances(&self, basis: &RealBasis, path: &Path) -> Result<()> {
        let mut out = String::from("# torus-bvm posterior-variance v1\nj,");
        for i in 1..=basis.dim() {
            let _ = write!(out, "k{i},");
        }
        out.push_str("kind,variance\n");
        for (j, v) in self.variances().iter().enumerate() {
            let _ = write!(out, "{j},");
            for k in basis.frequency(j) {
                let _ = write!(out, "{k},");
            }
            let kind = if j % 2 == 0 { "cos" } else { "sin" };
            let _ = writeln!(out, "{kind},{v}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Writes grid values as `x1..xd,value` rows with a schema line.
pub fn write_grid_csv(grid: &GridFunction, path: &Path) -> Result<()> {
    let mut out = String::from("# torus-bvm grid v1\n");
    for i in 1..=grid.dim() {
        let _ = write!(out, "x{i},");
    }
    out.push_str("value\n");
    for (idx, v) in grid.values().iter().enumerate() {
        for x in grid.point(idx) {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{v}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Posterior from the sufficient statistics and diagonal prior variances.
pub fn conjugate_posterior(
    sigma: &DMatrix<f64>,
    h: &DVector<f64>,
    prior_variances: &[f64],
) -> Result<GaussianPosterior> {
    let m = h.len();
    if sigma.nrows() != m || sigma.ncols() != m || prior_variances.len() != m {
        return Err(Error::Input(format!(
            "inconsistent sizes: Sigma {}x{}, H {m}, prior {}",
            sigma.nrows(),
            sigma.ncols(),
            prior_variances.len()
        )));
    }
    if let Some(v) = prior_variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Input(format!("prior variance must be positive, got {v}")));
    }
    let asym = asymmetry(sigma);
    if asym > 1e-8 {
        return Err(Error::Input(format!("Sigma is not symmetric (residue {asym:e})")));
    }
    let mut precision = sigma.clone();
    for (j, v) in prior_variances.iter().enumerate() {
        precision[(j, j)] += 1.0 / v;
    }
    symmetrize(&mut precision);
    let chol = robust_cholesky(&precision)?;
    let mean = chol.solve(h);
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    let cov_factor = robust_cholesky(&cov)?.unpack();
    Ok(GaussianPosterior {
        mean,
        precision,
        cov_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::sde::{simulate, FlatPotential};

    #[test]
    fn no_data_returns_prior() {
        let v = [0.5, 2.0, 3.0];
        let post = conjugate_posterior(&DMatrix::zeros(3, 3), &DVector::zeros(3), &v).unwrap();
        assert!(post.mean().iter().all(|&x| x == 0.0));
        for (a, b) in post.variances().iter().zip(v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_conjugacy() {
        let (a, h, v) = (3.7, 1.3, 0.8);
        let post = conjugate_posterior(&DMatrix::from_element(1, 1, a), &DVector::from_element(1, h), &[v]).unwrap();
        let p = a + 1.0 / v;
        assert!((post.mean()[0] - h / p).abs() < 1e-12);
        assert!((post.variances()[0] - 1.0 / p).abs() < 1e-12);
    }

    #[test]
    fn indefinite_precision_is_a_conditioning_error() {
        let mut s = DMatrix::identity(2, 2);
        s[(1, 1)] = -5.0;
        let err = conjugate_posterior(&s, &DVector::zeros(2), &[1.0, 1.0]).unwrap_err();
        match err {
            Error::Conditioning { min_eigenvalue } => assert!((min_eigenvalue + 4.0).abs() < 1e-12),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn rejects_nonpositive_prior_and_asymmetry() {
        assert!(conjugate_posterior(&DMatrix::zeros(1, 1), &DVector::zeros(1), &[0.0]).is_err());
        let mut s = DMatrix::zeros(2, 2);
        s[(0, 1)] = 1.0;
        assert!(conjugate_posterior(&s, &DVector::zeros(2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn single_point_gram() {
        let basis = RealBasis::new(1, 1);
        let traj = Trajectory::new(1, 0.01, 0, vec![0.3, 0.3], None).unwrap();
        let sigma = gram_matrix(&traj, &basis).unwrap();
        let mut g = vec![0.0; 2];
        basis.gradients_at(&[0.3], &mut g);
        assert!((sigma[(0, 0)] - g[0] * g[0] * 0.01).abs() < 1e-15);
        assert_eq!(drift_vector(&traj, &basis).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn reversal_changes_gram_by_endpoints_only() {
        let basis = RealBasis::new(2, 2);
        let traj = simulate(&FlatPotential(2), &[0.2, 0.9], 2.0, 1e-3, 11).unwrap();
        let a = gram_matrix(&traj, &basis).unwrap();
        let b = gram_matrix(&traj.reversed(), &basis).unwrap();
        let m = basis.len();
        let mut g0 = vec![0.0; 2 * m];
        let mut gn = vec![0.0; 2 * m];
        basis.gradients_at(traj.point(0), &mut g0);
        basis.gradients_at(traj.endpoint(), &mut gn);
        let g0 = DMatrix::from_column_slice(m, 2, &g0);
        let gn = DMatrix::from_column_slice(m, 2, &gn);
        let expected = (&g0 * g0.transpose() - &gn * gn.transpose()) * traj.dt();
        let err = (a - b - expected).abs().max();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn noise_free_increments_give_sigma_times_coefficients() {
        // A noise-free flow collapses onto a critical point, so the design
        // points come from a Brownian path and the increments from the drift.
        let basis = RealBasis::new(2, 2);
        let m = basis.len();
        let coords: Vec<f64> = (0..m).map(|j| ((j * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let b0 = basis.to_field(&coords);
        let dt = 1e-3;
        let path = simulate(&FlatPotential(2), &[0.1, 0.4], 20.0, dt, 4).unwrap();
        let mut acc = StatisticsAccumulator::new(&basis, dt);
        let mut grad = [0.0; 2];
        for r in 0..path.steps() {
            let x = path.point(r);
            b0.value_and_gradient(x, &mut grad);
            acc.push(x, &[grad[0] * dt, grad[1] * dt]);
        }
        let (sigma, h) = acc.finish();
        let predicted = &sigma * DVector::from_vec(coords.clone());
        let err = (&h - &predicted).abs().max() / h.abs().max();
        assert!(err < 1e-10, "{err}");
        let post = conjugate_posterior(&sigma, &h, &vec![1e6; m]).unwrap();
        for (a, b) in post.mean().iter().zip(&coords) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} {b}");
        }
    }

    #[test]
    fn mean_solves_normal_equations() {
        let basis = RealBasis::new(2, 3);
        let traj = simulate(&FlatPotential(2), &[0.5, 0.5], 5.0, 1e-3, 2).unwrap();
        let (sigma, h) = sufficient_statistics(&traj, &basis).unwrap();
        let post = conjugate_posterior(&sigma, &h, &vec![0.01; basis.len()]).unwrap();
        let res = (post.precision() * post.mean() - &h).norm() / h.norm();
        assert!(res < 1e-10, "{res}");
        let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
        assert!(eig.min() >= -1e-10 * sigma.norm());
    }

    #[test]
    fn tiny_prior_pins_draws_to_mean() {
        let post = conjugate_posterior(&DMatrix::zeros(2, 2), &DVector::zeros(2), &[1e-300, 1e-300]).unwrap();
        let draws = post.sample_coords(1, 10);
        assert!(draws.abs().max() < 1e-140);
    }

    #[test]
    fn sample_moments_match() {
        let m = 4;
        let a = DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
        let h = DVector::from_fn(m, |i, _| i as f64 - 1.0);
        let post = conjugate_posterior(&a, &h, &[1.0; 4]).unwrap();
        let count = 5000;
        let draws = post.sample_coords(8, count);
        let mean = draws.column_mean();
        let cov = post.covariance();
        for i in 0..m {
            let se = (cov[(i, i)] / count as f64).sqrt();
            assert!((mean[i] - post.mean()[i]).abs() < 4.0 * se);
        }
        let mut centered = draws.clone();
        for mut c in centered.column_iter_mut() {
            c -= &mean;
        }
        let sample_cov = &centered * centered.transpose() / (count - 1) as f64;
        let rel = (sample_cov - &cov).norm() / cov.norm();
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn permutation_equivariance() {
        let m = 3;
        let a = DMatrix::from_row_slice(m, m, &[2.0, 0.5, 0.1, 0.5, 3.0, 0.2, 0.1, 0.2, 1.5]);
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = [1.0, 2.0, 0.5];
        let post = conjugate_posterior(&a, &h, &v).unwrap();
        let perm = [2usize, 0, 1];
        let ap = DMatrix::from_fn(m, m, |i, j| a[(perm[i], perm[j])]);
        let hp = DVector::from_fn(m, |i, _| h[perm[i]]);
        let vp: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        let pp = conjugate_posterior(&ap, &hp, &vp).unwrap();
        let cov = post.covariance();
        let covp = pp.covariance();
        for i in 0..m {
            assert!((pp.mean()[i] - post.mean()[perm[i]]).abs() < 1e-14);
            for j in 0..m {
                assert!((covp[(i, j)] - cov[(perm[i], perm[j])]).abs() < 1e-14);
            }
        }
    }
}
