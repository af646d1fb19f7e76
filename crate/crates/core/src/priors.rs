//! Rescaled Gaussian (periodic Matérn) and Besov–Laplace prior draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::RealBasis;
use crate::error::{Error, Result};
use crate::field::{FourierField, GridFunction};
use crate::rng;

/// How the per-mode prior scale depends on `|k|` and on the horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    /// `sd_k = (1 + 4 pi^2 |k|^2)^{-(s+1)/2} T^{-d/(4s+2d)}`.
    #[default]
    Sobolev,
    /// `sd_k = (1 + |k|^2)^{(s+1)/2} T^{-1/(2s+2)}`, a growing sequence.
    Printed,
}

/// Truncated periodic Matérn prior, rescaled with the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternPrior {
    pub dim: usize,
    pub smoothness: f64,
    pub cutoff: usize,
    pub horizon: f64,
    #[serde(default)]
    pub convention: VarianceConvention,
    /// Multiplies every standard deviation.
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl MaternPrior {
    pub fn new(dim: usize, smoothness: f64, cutoff: usize, horizon: f64) -> Self {
        Self {
            dim,
            smoothness,
            cutoff,
            horizon,
            convention: VarianceConvention::Sobolev,
            amplitude: 1.0,
        }
    }

    pub fn with_convention(mut self, convention: VarianceConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Horizon-dependent factor multiplying every standard deviation.
    pub fn global_scale(&self) -> f64 {
        let d = self.dim as f64;
        let s = self.smoothness;
        match self.convention {
            VarianceConvention::Sobolev => self.horizon.powf(-d / (4.0 * s + 2.0 * d)),
            VarianceConvention::Printed => self.horizon.powf(-1.0 / (2.0 * s + 2.0)),
        }
    }

    /// Standard deviation profile before the global scale.
    pub fn shape(&self, k: &[i32]) -> f64 {
        let k2: f64 = k.iter().map(|&v| (v as f64).powi(2)).sum();
        let e = (self.smoothness + 1.0) / 2.0;
        let base = match self.convention {
            VarianceConvention::Sobolev => (1.0 + 4.0 * PI * PI * k2).powf(-e),
            VarianceConvention::Printed => (1.0 + k2).powf(e),
        };
        self.amplitude * base
    }

    /// `v_k`, the standard deviation of each real coordinate on frequency `k`.
    pub fn std_dev(&self, k: &[i32]) -> f64 {
        self.shape(k) * self.global_scale()
    }

    pub fn basis(&self) -> RealBasis {
        RealBasis::new(self.dim, self.cutoff)
    }

    /// Prior variances aligned with [`RealBasis`] coordinates.
    pub fn variances(&self) -> Vec<f64> {
        let basis = self.basis();
        (0..basis.len())
            .map(|j| self.std_dev(basis.frequency(j)).powi(2))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("prior dimension must be positive".into()));
        }
        if self.cutoff == 0 {
            return Err(Error::Config("prior cutoff must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.smoothness > 0.0 && self.amplitude >= 0.0) {
            return Err(Error::Config(
                "prior needs positive horizon and smoothness, nonnegative amplitude".into(),
            ));
        }
        Ok(())
    }

    /// One draw; each real coordinate is `shape_k * g * scale`.
    pub fn sample(&self, seed: u64) -> FourierField {
        let basis = self.basis();
        let scale = self.global_scale();
        let mut gen = rng::generator(seed);
        let coords: Vec<f64> = (0..basis.len())
            .map(|j| {
                let g: f64 = gen.sample(StandardNormal);
                self.shape(basis.frequency(j)) * g * scale
            })
            .collect();
        basis.to_field(&coords)
    }
}

/// Truncated tensor Haar series with i.i.d. Laplace coefficients, rescaled
/// with the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovLaplacePrior {
    pub dim: usize,
    pub smoothness: f64,
    /// Finest level `J`.
    pub level: u32,
    pub horizon: f64,
    /// Multiplies every level weight; zero gives the zero field.
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl BesovLaplacePrior {
    /// Chooses `J` with `2^J` closest to `T^{1/(2s+d)}`.
    pub fn for_horizon(dim: usize, smoothness: f64, horizon: f64) -> Self {
        let d = dim as f64;
        let level = (horizon.log2() / (2.0 * smoothness + d)).round().max(0.0) as u32;
        Self {
            dim,
            smoothness,
            level,
            horizon,
            amplitude: 1.0,
        }
    }

    pub fn global_scale(&self) -> f64 {
        let d = self.dim as f64;
        self.horizon.powf(-d / (2.0 * self.smoothness + d))
    }

    /// `2^{-l(s+1-d/2)}`.
    pub fn level_weight(&self, l: u32) -> f64 {
        let d = self.dim as f64;
        self.amplitude * 2f64.powf(-(l as f64) * (self.smoothness + 1.0 - d / 2.0))
    }

    /// Wavelets on level `l`: `(2^d - 1) 2^{ld}`.
    pub fn level_len(&self, l: u32) -> usize {
        ((1usize << self.dim) - 1) << (l as usize * self.dim)
    }

    /// Grid on which every wavelet up to level `J` is constant per cell.
    pub fn resolution(&self) -> usize {
        1usize << (self.level + 1)
    }

    /// Raw Laplace(scale 2) coefficients, level by level.
    pub fn sample_coefficients(&self, seed: u64) -> Vec<Vec<f64>> {
        let mut gen = rng::generator(seed);
        (0..=self.level)
            .map(|l| {
                (0..self.level_len(l))
                    .map(|_| {
                        let e: f64 = gen.sample(Exp1);
                        if gen.random::<bool>() {
                            2.0 * e
                        } else {
                            -2.0 * e
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Weighted, rescaled sum of Haar wavelets on the dyadic grid.
    pub fn synthesize(&self, coeffs: &[Vec<f64>]) -> GridFunction {
        let n = self.resolution();
        let d = self.dim;
        let scale = self.global_scale();
        let mut values = vec![0.0; n.pow(d as u32)];
        for (l, level) in coeffs.iter().enumerate() {
            let w = self.level_weight(l as u32) * scale;
            for (idx, &g) in level.iter().enumerate() {
                let c = w * g;
                if c != 0.0 {
                    add_haar(&mut values, n, d, l as u32, idx, c);
                }
            }
        }
        GridFunction::new(d, n, values).expect("finite by construction")
    }

    pub fn sample(&self, seed: u64) -> GridFunction {
        self.synthesize(&self.sample_coefficients(seed))
    }

    /// Inner products of `g` with the level-`l` wavelets, in coefficient order.
    pub fn analyze(&self, g: &GridFunction, l: u32) -> Vec<f64> {
        let n = g.resolution();
        (0..self.level_len(l))
            .map(|idx| {
                let mut unit = vec![0.0; g.len()];
                add_haar(&mut unit, n, self.dim, l, idx, 1.0);
                unit.iter().zip(g.values()).map(|(a, b)| a * b).sum::<f64>() / g.len() as f64
            })
            .collect()
    }
}

/// Adds `c * Phi_{l,idx}` to `values` on the `n^d` lattice. The index packs
/// the wavelet type `e in {1..2^d-1}` (slow) and the translation `r` (fast).
fn add_haar(values: &mut [f64], n: usize, d: usize, l: u32, idx: usize, c: f64) {
    let per_level = 1usize << l;
    let positions = per_level.pow(d as u32);
    let kind = idx / positions + 1;
    let mut rest = idx % positions;
    let mut r = vec![0usize; d];
    for slot in r.iter_mut().rev() {
        *slot = rest % per_level;
        rest /= per_level;
    }
    let cell = n / per_level;
    let amp = c * 2f64.powf(l as f64 * d as f64 / 2.0);
    let mut offs = vec![0usize; d];
    let total = cell.pow(d as u32);
    for t in 0..total {
        let mut rest = t;
        for slot in offs.iter_mut().rev() {
            *slot = rest % cell;
            rest /= cell;
        }
        let mut sign = 1.0;
        let mut lin = 0usize;
        for axis in 0..d {
            let bit = (kind >> (d - 1 - axis)) & 1;
            if bit == 1 && offs[axis] >= cell / 2 {
                sign = -sign;
            }
            lin = lin * n + r[axis] * cell + offs[axis];
        }
        values[lin] += sign * amp;
    }
}
