//! Real cosine/sine basis for zero-mean fields.
//!
//! For each canonical frequency `k` (in storage order) the basis holds the
//! pair `sqrt(2) cos(2 pi k.x)`, `sqrt(2) sin(2 pi k.x)` at positions `2j` and
//! `2j + 1`. A complex coefficient `c = a + ib` on `k` corresponds to the real
//! coordinates `(sqrt(2) a, -sqrt(2) b)`; the map is an isometry between
//! `L^2` and Euclidean norms.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{FourierField, ModeCube, Twiddles};

#[derive(Clone, Debug, PartialEq)]
pub struct RealBasis {
    dim: usize,
    cutoff: usize,
    modes: Vec<i32>,
}

impl RealBasis {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        Self {
            dim,
            cutoff,
            modes: ModeCube::new(dim, cutoff).half_modes(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of basis functions, `(2K+1)^d - 1`.
    pub fn len(&self) -> usize {
        self.modes.len() / self.dim * 2
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Frequency of basis function `j`.
    pub fn frequency(&self, j: usize) -> &[i32] {
        let p = j / 2;
        &self.modes[p * self.dim..(p + 1) * self.dim]
    }

    /// Canonical frequencies, flattened with stride `dim`.
    pub fn modes(&self) -> &[i32] {
        &self.modes
    }

    pub fn to_field(&self, coords: &[f64]) -> FourierField {
        assert_eq!(coords.len(), self.len(), "coordinate vector has wrong length");
        let half = coords
            .chunks(2)
            .map(|ab| Complex64::new(ab[0] / SQRT_2, -ab[1] / SQRT_2))
            .collect();
        FourierField::from_half(self.dim, self.cutoff, 0.0, half).expect("sizes match by construction")
    }

    /// Real coordinates of the nonzero modes of `field` up to this cutoff.
    /// Higher frequencies and the mean are dropped.
    pub fn coordinates(&self, field: &FourierField) -> Result<Vec<f64>> {
        if field.dim() != self.dim {
            return Err(Error::Input(format!(
                "field dimension {} does not match basis dimension {}",
                field.dim(),
                self.dim
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for k in self.modes.chunks(self.dim) {
            let c = field.coeff(k);
            out.push(SQRT_2 * c.re);
            out.push(-SQRT_2 * c.im);
        }
        Ok(out)
    }

    /// Values of all basis functions at `x`.
    pub fn values_at(&self, x: &[f64], out: &mut [f64]) {
        let tw = Twiddles::new(x, self.cutoff);
        for (j, k) in self.modes.chunks(self.dim).enumerate() {
            let z = tw.phase(k);
            out[2 * j] = SQRT_2 * z.re;
            out[2 * j + 1] = SQRT_2 * z.im;
        }
    }

    /// Gradients of all basis functions at `x`, written as a column-major
    /// `len x dim` block: `out[axis * len + j] = d phi_j / d x_axis`.
    pub fn gradients_at(&self, x: &[f64], out: &mut [f64]) {
        let m = self.len();
        let tw = Twiddles::new(x, self.cutoff);
        let c = 2.0 * PI * SQRT_2;
        for (j, k) in self.modes.chunks(self.dim).enumerate() {
            let z = tw.phase(k);
            for (axis, &ki) in k.iter().enumerate() {
                let f = c * ki as f64;
                out[axis * m + 2 * j] = -f * z.im;
                out[axis * m + 2 * j + 1] = f * z.re;
            }
        }
    }

    /// Matrix of basis values on the `n^d` lattice, one row per grid point.
    pub fn grid_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        if n < 2 * self.cutoff + 1 {
            return Err(Error::Resolution {
                resolution: n,
                required: 2 * self.cutoff + 1,
            });
        }
        let points = n.pow(self.dim as u32);
        let m = self.len();
        let mut mat = DMatrix::zeros(points, m);
        let mut row = vec![0.0; m];
        let mut x = vec![0.0; self.dim];
        for p in 0..points {
            let mut rest = p;
            for slot in x.iter_mut().rev() {
                *slot = (rest % n) as f64 / n as f64;
                rest /= n;
            }
            self.values_at(&x, &mut row);
            for (j, &v) in row.iter().enumerate() {
                mat[(p, j)] = v;
            }
        }
        Ok(mat)
    }
}
