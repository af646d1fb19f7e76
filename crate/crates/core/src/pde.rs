//! Spectral Galerkin solver for `div(mu grad u) = psi` on the torus and the
//! efficient variance `int mu |grad u|^2`.
//!
//! With `A u = div(mu grad u)` the weak form is
//! `<A u, phi> = -int mu grad u . grad phi`, so in the real cos/sin basis the
//! Galerkin system reads `S u = -b` with the positive stiffness matrix `S`
//! and `b_j = <psi, phi_j>`. Then `V = u^T S u = -<psi, u>`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::RealBasis;
use crate::error::{Error, Result};
use crate::field::{FourierField, GridFunction, ModeCube, ScalarField};
use crate::functionals::{self, FunctionalSpec, InvariantMeasure};
use crate::sde::Trajectory;

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

/// Fourier coefficients of `mu` on the cube `|m|_inf <= cutoff`.
struct Spectrum {
    cube: ModeCube,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    fn new(mu: &GridFunction, cutoff: usize) -> Self {
        Self {
            cube: ModeCube::new(mu.dim(), cutoff),
            coeffs: mu.dft(cutoff),
        }
    }

    #[inline]
    fn get(&self, m: &[i32]) -> Complex64 {
        match self.cube.encode(m) {
            Some(i) => self.coeffs[i],
            None => Complex64::new(0.0, 0.0),
        }
    }
}

fn dot(a: &[i32], b: &[i32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn add(a: &[i32], b: &[i32], sign: i32) -> Vec<i32> {
    a.iter().zip(b).map(|(&x, &y)| x + sign * y).collect()
}

/// Assembled stiffness `S_{jl} = int mu grad phi_j . grad phi_l` on the
/// Galerkin space `0 < |k|_inf <= K_G`.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    mu: GridFunction,
    basis: RealBasis,
    stiffness: DMatrix<f64>,
}

impl EllipticOperator {
    /// Needs `n >= 4 K_G + 1` so every product of two basis gradients is
    /// resolved by the lattice.
    pub fn assemble(mu: &GridFunction, galerkin_cutoff: usize) -> Result<Self> {
        if galerkin_cutoff == 0 {
            return Err(Error::Input("Galerkin cutoff must be at least 1".into()));
        }
        if let Some(v) = mu.values().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Input(format!("density must be positive, found {v}")));
        }
        let required = 4 * galerkin_cutoff + 1;
        if mu.resolution() < required {
            return Err(Error::Resolution {
                resolution: mu.resolution(),
                required,
            });
        }
        let spec = Spectrum::new(mu, 2 * galerkin_cutoff);
        let basis = RealBasis::new(mu.dim(), galerkin_cutoff);
        let m = basis.len();
        let modes: Vec<&[i32]> = basis.modes().chunks(mu.dim()).collect();
        let mut s = DMatrix::zeros(m, m);
        for (p, k) in modes.iter().enumerate() {
            for (q, kp) in modes.iter().enumerate().skip(p) {
                let w = FOUR_PI_SQ * dot(k, kp);
                if w == 0.0 {
                    continue;
                }
                let diff = spec.get(&add(k, kp, -1));
                let sum = spec.get(&add(k, kp, 1));
                // cos(theta) = Re, sin(theta) = -Im of the coefficient
                let cc = w * (diff.re - sum.re);
                let ss = w * (diff.re + sum.re);
                let cs = w * (sum.im + diff.im);
                let sc = w * (sum.im - diff.im);
                s[(2 * p, 2 * q)] = cc;
                s[(2 * p + 1, 2 * q + 1)] = ss;
                s[(2 * p, 2 * q + 1)] = cs;
                s[(2 * p + 1, 2 * q)] = sc;
                s[(2 * q, 2 * p)] = cc;
                s[(2 * q + 1, 2 * p + 1)] = ss;
                s[(2 * q + 1, 2 * p)] = cs;
                s[(2 * q, 2 * p + 1)] = sc;
            }
        }
        Ok(Self {
            mu: mu.clone(),
            basis,
            stiffness: s,
        })
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn basis(&self) -> &RealBasis {
        &self.basis
    }

    pub fn galerkin_cutoff(&self) -> usize {
        self.basis.cutoff()
    }

    /// Galerkin solution of `A u = psi`; `psi` must have zero mean.
    pub fn solve(&self, psi: &FourierField) -> Result<EfficiencyReport> {
        if !psi.is_zero_mean() {
            return Err(Error::Input("right-hand side must have zero mean".into()));
        }
        let b = DVector::from_vec(self.basis.coordinates(&psi.with_cutoff(self.galerkin_cutoff()))?);
        let chol = Cholesky::new(self.stiffness.clone()).ok_or_else(|| Error::Conditioning {
            min_eigenvalue: self.stiffness.clone().symmetric_eigenvalues().min(),
        })?;
        let u = -chol.solve(&b);
        let variance = u.dot(&(&self.stiffness * &u));
        let inner = b.dot(&u);
        let solution = self.basis.to_field(u.as_slice());
        let residual = self.residual(&solution, psi);
        Ok(EfficiencyReport {
            solution,
            variance,
            psi_inner_u: inner,
            residual,
            galerkin_cutoff: self.galerkin_cutoff(),
        })
    }

    /// `A u` on the modes `|k|_inf <= cutoff`, from `(A u)^(k) =
    /// -4 pi^2 sum_k' (k.k') mu^(k - k') u^(k')`.
    pub fn apply(&self, u: &FourierField, cutoff: usize) -> FourierField {
        let d = self.mu.dim();
        let spec = Spectrum::new(&self.mu, cutoff + u.cutoff());
        let mut out = FourierField::zeros(d, cutoff);
        let modes: Vec<(Vec<i32>, Complex64)> = u.modes().filter(|(_, c)| c.norm() != 0.0).collect();
        let cube = ModeCube::new(d, cutoff);
        let mut k = vec![0i32; d];
        for lin in cube.center() + 1..cube.len() {
            cube.decode(lin, &mut k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (kp, c) in &modes {
                let w = dot(&k, kp);
                if w != 0.0 {
                    acc += spec.get(&add(&k, kp, -1)) * c * w;
                }
            }
            out.set_coeff(&k, -FOUR_PI_SQ * acc);
        }
        out
    }

    /// `||A u - psi||_{L^2}` over modes up to `max(3 K_G, K_psi)`.
    fn residual(&self, u: &FourierField, psi: &FourierField) -> f64 {
        let cutoff = (3 * self.galerkin_cutoff()).max(psi.cutoff());
        let au = self.apply(u, cutoff);
        let diff = au.combine(1.0, &psi.with_cutoff(cutoff), -1.0);
        diff.l2_inner(&diff).sqrt()
    }
}

/// Galerkin solution with its diagnostics.
#[derive(Clone, Debug)]
pub struct EfficiencyReport {
    pub solution: FourierField,
    /// `V = int mu |grad u|^2`.
    pub variance: f64,
    /// `<psi, u>`, equal to `-V` on the Galerkin space.
    pub psi_inner_u: f64,
    pub residual: f64,
    pub galerkin_cutoff: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EfficiencyJson {
    #[serde(rename = "V")]
    pub variance: f64,
    pub residual: f64,
    #[serde(rename = "K_G")]
    pub galerkin_cutoff: usize,
    pub psi_inner_u: f64,
    pub spec: Option<FunctionalSpec>,
}

impl EfficiencyReport {
    pub fn to_json(&self, spec: Option<&FunctionalSpec>) -> EfficiencyJson {
        EfficiencyJson {
            variance: self.variance,
            residual: self.residual,
            galerkin_cutoff: self.galerkin_cutoff,
            psi_inner_u: self.psi_inner_u,
            spec: spec.cloned(),
        }
    }

    /// `int mu |grad u|^2` by lattice quadrature, independent of `S`.
    pub fn quadrature_variance(&self, mu: &GridFunction) -> Result<f64> {
        let grads = self.solution.gradient();
        let mut total = GridFunction::from_fn(mu.dim(), mu.resolution(), |_| 0.0);
        for g in grads {
            let gg = g.to_grid(mu.resolution())?;
            total = total.zip_with(&gg, |a, b| a + b * b);
        }
        Ok(total.inner(mu))
    }
}

/// Cutoffs for the representor and the Galerkin space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub grid: usize,
    pub representor_cutoff: usize,
    pub galerkin_cutoff: usize,
}

/// Representor, operator and solve at a known `B0` given on a grid.
pub fn efficient_variance(b0: &GridFunction, spec: &FunctionalSpec, res: Resolution) -> Result<EfficiencyReport> {
    if b0.resolution() != res.grid {
        return Err(Error::Input(format!(
            "B0 grid has resolution {}, expected {}",
            b0.resolution(),
            res.grid
        )));
    }
    let psi = functionals::representor(spec, b0, res.representor_cutoff)?;
    let mu = InvariantMeasure::from_grid(b0);
    EllipticOperator::assemble(mu.density(), res.galerkin_cutoff)?.solve(&psi)
}

/// `Psi(B0) + (1/T) sum_r grad u(x_r) . noise_r`.
pub fn efficient_estimator(traj: &Trajectory, u: &FourierField, psi_b0: f64) -> Result<f64> {
    let noise = traj
        .noise()
        .ok_or_else(|| Error::Input("efficient estimator needs the trajectory's noise record".into()))?;
    if u.dim() != traj.dim() {
        return Err(Error::Input("solution and trajectory dimensions differ".into()));
    }
    let d = traj.dim();
    let eval = u.evaluator();
    let mut grad = vec![0.0; d];
    let mut acc = 0.0;
    for r in 0..traj.steps() {
        eval.value_and_gradient(traj.point(r), &mut grad);
        acc += grad.iter().zip(&noise[r * d..(r + 1) * d]).map(|(g, w)| g * w).sum::<f64>();
    }
    Ok(psi_b0 + acc / traj.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(dim: usize, n: usize) -> GridFunction {
        GridFunction::from_fn(dim, n, |_| 1.0)
    }

    #[test]
    fn uniform_density_gives_laplacian_spectrum() {
        let op = EllipticOperator::assemble(&uniform(2, 17), 4).unwrap();
        let s = op.stiffness();
        for j in 0..op.basis().len() {
            let k = op.basis().frequency(j);
            let want = FOUR_PI_SQ * dot(k, k);
            assert!((s[(j, j)] - want).abs() < 1e-9 * want);
            for l in 0..op.basis().len() {
                if l != j {
                    assert!(s[(j, l)].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn stiffness_is_linear_in_density() {
        let b = FourierField::cos_mode(2, 2, &[1, 1]).scaled(0.3);
        let mu = InvariantMeasure::from_grid(&b.to_grid(16).unwrap()).density().clone();
        let a = EllipticOperator::assemble(&mu, 3).unwrap();
        let b3 = EllipticOperator::assemble(&mu.map(|v| 3.0 * v), 3).unwrap();
        let err = (b3.stiffness() - a.stiffness() * 3.0).abs().max();
        assert!(err < 1e-10 * a.stiffness().abs().max());
        assert_eq!(a.stiffness(), &a.stiffness().transpose());
    }

    #[test]
    fn stiffness_matches_lattice_quadrature() {
        let b = FourierField::cos_mode(2, 2, &[1, 2]).scaled(0.4).combine(1.0, &FourierField::sin_mode(2, 2, &[2, -1]), 0.2);
        let n = 20;
        let mu = InvariantMeasure::from_grid(&b.to_grid(n).unwrap()).density().clone();
        let op = EllipticOperator::assemble(&mu, 2).unwrap();
        let basis = op.basis();
        let m = basis.len();
        let mut direct = DMatrix::zeros(m, m);
        let mut g = vec![0.0; 2 * m];
        for (idx, &w) in mu.values().iter().enumerate() {
            basis.gradients_at(&mu.point(idx), &mut g);
            let gm = DMatrix::from_column_slice(m, 2, &g);
            direct += &gm * gm.transpose() * w;
        }
        direct /= (n * n) as f64;
        let err = (direct - op.stiffness()).abs().max();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn analytic_laplacian_inverse() {
        let op = EllipticOperator::assemble(&uniform(2, 33), 8).unwrap();
        let psi = FourierField::cos_mode(2, 8, &[1, 0]);
        let rep = op.solve(&psi).unwrap();
        let want = 1.0 / FOUR_PI_SQ;
        assert!((rep.variance - want).abs() < 1e-12 * want);
        let expected_u = psi.scaled(-1.0 / FOUR_PI_SQ);
        let diff = rep.solution.combine(1.0, &expected_u, -1.0);
        assert!(diff.l2_inner(&diff).sqrt() < 1e-14);
        assert!(rep.residual < 1e-12);
        assert!((rep.psi_inner_u + rep.variance).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = EllipticOperator::assemble(&uniform(1, 9), 2).unwrap();
        let rep = op.solve(&FourierField::zeros(1, 2)).unwrap();
        assert_eq!(rep.variance, 0.0);
        assert!(rep.solution.half_coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            EllipticOperator::assemble(&uniform(2, 16), 4),
            Err(Error::Resolution { required: 17, .. })
        ));
        let neg = GridFunction::from_fn(1, 9, |x| x[0] - 0.5);
        assert!(EllipticOperator::assemble(&neg, 2).is_err());
        let op = EllipticOperator::assemble(&uniform(1, 9), 2).unwrap();
        assert!(op.solve(&FourierField::constant(1, 2, 1.0)).is_err());
    }

    #[test]
    fn energy_identity_and_quadrature_variance() {
        let b = FourierField::cos_mode(2, 2, &[1, 1]).scaled(0.5).combine(1.0, &FourierField::sin_mode(2, 2, &[0, 1]), 0.3);
        let n = 40;
        let b0 = b.to_grid(n).unwrap();
        let spec = FunctionalSpec::EntropyMu;
        let res = Resolution {
            grid: n,
            representor_cutoff: 6,
            galerkin_cutoff: 6,
        };
        let rep = efficient_variance(&b0, &spec, res).unwrap();
        assert!(rep.variance > 0.0);
        assert!((rep.variance + rep.psi_inner_u).abs() < 1e-6 * rep.variance);
        let mu = InvariantMeasure::from_grid(&b0);
        let quad = rep.quadrature_variance(mu.density()).unwrap();
        assert!((quad - rep.variance).abs() < 1e-10 * rep.variance, "{quad} {}", rep.variance);
    }

    #[test]
    fn variance_grows_with_galerkin_space() {
        let b = FourierField::cos_mode(2, 2, &[1, 2]).scaled(0.6);
        let n = 64;
        let b0 = b.to_grid(n).unwrap();
        let spec = FunctionalSpec::PowerB { q: 4 };
        let mut last = 0.0;
        for kg in 1..=8 {
            let res = Resolution {
                grid: n,
                representor_cutoff: 8,
                galerkin_cutoff: kg,
            };
            let v = efficient_variance(&b0, &spec, res).unwrap().variance;
            assert!(v >= last - 1e-10, "{kg}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn estimator_without_solution_is_truth() {
        let traj = crate::sde::simulate(&crate::sde::FlatPotential(2), &[0.5, 0.5], 1.0, 1e-2, 1).unwrap();
        let est = efficient_estimator(&traj, &FourierField::zeros(2, 3), 0.7).unwrap();
        assert_eq!(est, 0.7);
        assert!(efficient_estimator(&traj.reversed(), &FourierField::zeros(2, 3), 0.7).is_err());
    }

    #[test]
    fn json_shape() {
        let op = EllipticOperator::assemble(&uniform(1, 9), 2).unwrap();
        let rep = op.solve(&FourierField::cos_mode(1, 2, &[1])).unwrap();
        let json = serde_json::to_value(rep.to_json(Some(&FunctionalSpec::SqrtMu))).unwrap();
        assert!(json.get("V").is_some() && json.get("K_G").is_some() && json.get("residual").is_some());
        assert_eq!(json["spec"]["kind"], "sqrt_mu");
    }
}
