//! Scalar functionals of the potential, their `L^2` representors and
//! linearization remainders.
//!
//! Everything is computed on a lattice: `Psi(B)` is a lattice average, `psi`
//! is built pointwise and only projected to Fourier modes on request, and the
//! remainder pairs `psi` with `B - B0` by the same quadrature.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FourierField, GridFunction};

/// Weight function for the linear functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Weight {
    /// The constant 1.
    One,
    /// `sqrt(2) cos(2 pi k.x)`.
    Cos { k: Vec<i32> },
    /// `sqrt(2) sin(2 pi k.x)`.
    Sin { k: Vec<i32> },
    /// Explicit Fourier coefficients `(k, re, im)` over the canonical half.
    Field { dim: usize, cutoff: usize, modes: Vec<crate::field::ModeRecord> },
}

impl Weight {
    pub fn to_grid(&self, dim: usize, n: usize) -> Result<GridFunction> {
        let phase = |k: &[i32], x: &[f64]| -> f64 {
            2.0 * PI * k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>()
        };
        let check = |k: &[i32]| -> Result<()> {
            if k.len() != dim {
                return Err(Error::Config(format!(
                    "weight frequency {k:?} does not have dimension {dim}"
                )));
            }
            Ok(())
        };
        match self {
            Weight::One => Ok(GridFunction::from_fn(dim, n, |_| 1.0)),
            Weight::Cos { k } => {
                check(k)?;
                Ok(GridFunction::from_fn(dim, n, |x| SQRT_2 * phase(k, x).cos()))
            }
            Weight::Sin { k } => {
                check(k)?;
                Ok(GridFunction::from_fn(dim, n, |x| SQRT_2 * phase(k, x).sin()))
            }
            Weight::Field { dim: wd, cutoff, modes } => {
                if *wd != dim {
                    return Err(Error::Config(format!(
                        "weight field has dimension {wd}, expected {dim}"
                    )));
                }
                FourierField::from_records(*wd, *cutoff, modes)?.to_grid(n)
            }
        }
    }
}

/// Which functional and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FunctionalSpec {
    /// `int B a`.
    #[serde(rename = "linear_B")]
    LinearB { weight: Weight },
    /// `int B^q`; `q = 2` is the squared `L^2` norm.
    #[serde(rename = "power_B")]
    PowerB { q: u32 },
    /// `int mu_B phi`.
    #[serde(rename = "linear_mu")]
    LinearMu { weight: Weight },
    /// `int mu_B log mu_B`.
    #[serde(rename = "entropy_mu")]
    EntropyMu,
    /// `int sqrt(mu_B)`.
    #[serde(rename = "sqrt_mu")]
    SqrtMu,
    /// `int mu_B^q`.
    #[serde(rename = "power_mu")]
    PowerMu { q: u32 },
}

impl FunctionalSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionalSpec::PowerB { q } | FunctionalSpec::PowerMu { q } if *q < 2 => Err(
                Error::Config(format!("power functionals need an integer q >= 2, got {q}")),
            ),
            _ => Ok(()),
        }
    }

    /// Short label used in tables, e.g. `power_B(q=4)`.
    pub fn label(&self) -> String {
        match self {
            FunctionalSpec::LinearB { .. } => "linear_B".into(),
            FunctionalSpec::PowerB { q } => format!("power_B(q={q})"),
            FunctionalSpec::LinearMu { .. } => "linear_mu".into(),
            FunctionalSpec::EntropyMu => "entropy_mu".into(),
            FunctionalSpec::SqrtMu => "sqrt_mu".into(),
            FunctionalSpec::PowerMu { q } => format!("power_mu(q={q})"),
        }
    }

    fn uses_measure(&self) -> bool {
        !matches!(self, FunctionalSpec::LinearB { .. } | FunctionalSpec::PowerB { .. })
    }
}

/// Normalized density `e^{2B} / int e^{2B}` and its logarithm on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantMeasure {
    density: GridFunction,
    log_density: GridFunction,
}

impl InvariantMeasure {
    /// The exponent is shifted by `max 2B` before exponentiating.
    pub fn from_grid(b: &GridFunction) -> Self {
        let shift = 2.0 * b.max();
        let unnorm = b.map(|v| (2.0 * v - shift).exp());
        let log_z = unnorm.integrate().ln();
        let log_density = b.map(|v| 2.0 * v - shift - log_z);
        let density = log_density.map(f64::exp);
        Self {
            density,
            log_density,
        }
    }

    pub fn density(&self) -> &GridFunction {
        &self.density
    }

    pub fn log_density(&self) -> &GridFunction {
        &self.log_density
    }
}

pub fn invariant_measure(b: &FourierField, n: usize) -> Result<InvariantMeasure> {
    Ok(InvariantMeasure::from_grid(&b.to_grid(n)?))
}

fn weight_grid(weight: &Weight, b: &GridFunction) -> Result<GridFunction> {
    weight.to_grid(b.dim(), b.resolution())
}

/// `Psi(B)` by lattice quadrature.
pub fn evaluate_grid(spec: &FunctionalSpec, b: &GridFunction) -> Result<f64> {
    spec.validate()?;
    if !spec.uses_measure() {
        return Ok(match spec {
            FunctionalSpec::LinearB { weight } => b.inner(&weight_grid(weight, b)?),
            FunctionalSpec::PowerB { q } => b.map(|v| v.powi(*q as i32)).integrate(),
            _ => unreachable!(),
        });
    }
    let mu = InvariantMeasure::from_grid(b);
    evaluate_measure(spec, &mu, b)
}

fn evaluate_measure(spec: &FunctionalSpec, mu: &InvariantMeasure, b: &GridFunction) -> Result<f64> {
    let (m, lm) = (mu.density(), mu.log_density());
    Ok(match spec {
        FunctionalSpec::LinearMu { weight } => m.inner(&weight_grid(weight, b)?),
        FunctionalSpec::EntropyMu => m.inner(lm),
        FunctionalSpec::SqrtMu => lm.map(|l| (0.5 * l).exp()).integrate(),
        FunctionalSpec::PowerMu { q } => lm.map(|l| (*q as f64 * l).exp()).integrate(),
        _ => unreachable!(),
    })
}

/// `Psi(B)` on an `n^d` grid.
pub fn evaluate_functional(spec: &FunctionalSpec, b: &FourierField, n: usize) -> Result<f64> {
    evaluate_grid(spec, &b.to_grid(n)?)
}

/// Pointwise representor `psi` at `B0`, with its lattice mean removed.
pub fn representor_grid(spec: &FunctionalSpec, b0: &GridFunction) -> Result<GridFunction> {
    spec.validate()?;
    let psi = match spec {
        FunctionalSpec::LinearB { weight } => weight_grid(weight, b0)?,
        FunctionalSpec::PowerB { q } => {
            let q = *q as i32;
            b0.map(|v| q as f64 * v.powi(q - 1))
        }
        _ => {
            let mu = InvariantMeasure::from_grid(b0);
            let (m, lm) = (mu.density(), mu.log_density());
            match spec {
                FunctionalSpec::LinearMu { weight } => {
                    let phi = weight_grid(weight, b0)?;
                    let c = m.inner(&phi);
                    m.zip_with(&phi, |mv, p| 2.0 * mv * (p - c))
                }
                FunctionalSpec::EntropyMu => {
                    let c = m.inner(lm);
                    m.zip_with(lm, |mv, l| 2.0 * mv * (l - c))
                }
                FunctionalSpec::SqrtMu => {
                    let c = lm.map(|l| (0.5 * l).exp()).integrate();
                    lm.map(|l| (0.5 * l).exp() - c * l.exp())
                }
                FunctionalSpec::PowerMu { q } => {
                    let q = *q as f64;
                    let c = lm.map(|l| (q * l).exp()).integrate();
                    lm.map(|l| 2.0 * q * ((q * l).exp() - c * l.exp()))
                }
                _ => unreachable!(),
            }
        }
    };
    let mean = psi.integrate();
    Ok(psi.map(|v| v - mean))
}

/// Representor projected onto modes `|k|_inf <= cutoff`, with zero mean.
pub fn representor(spec: &FunctionalSpec, b0: &GridFunction, cutoff: usize) -> Result<FourierField> {
    let psi = representor_grid(spec, b0)?.project(cutoff)?;
    Ok(psi.centered())
}

/// `Psi(B) - Psi(B0) - <psi(B0), B - B0>` with every term on the lattice.
pub fn remainder(spec: &FunctionalSpec, b: &GridFunction, b0: &GridFunction) -> Result<f64> {
    if b.dim() != b0.dim() || b.resolution() != b0.resolution() {
        return Err(Error::Input("remainder needs fields on the same grid".into()));
    }
    let psi = representor_grid(spec, b0)?;
    let diff = b.zip_with(b0, |x, y| x - y);
    Ok(evaluate_grid(spec, b)? - evaluate_grid(spec, b0)? - psi.inner(&diff))
}
