//! Real periodic scalar fields on the unit torus.
//!
//! A [`FourierField`] is a truncated Fourier series over the cube of
//! frequencies `|k|_inf <= K`. Only the zero mode and the canonical half of
//! the cube (frequencies whose first nonzero component is positive) are
//! stored; the other half is the complex conjugate, so every field is real.
//!
//! Frequencies are addressed by their position in the cube when read as a
//! base-`(2K+1)` number with digits `k_i + K`, first axis most significant.
//! Under that ordering `-k` sits at the mirror position of `k`, and the
//! canonical half is exactly the upper half of the cube.
//!
//! A [`GridFunction`] holds values on the regular lattice `{0, 1/n, ...}^d`
//! (row-major, first axis slowest). Lattice averages integrate trigonometric
//! polynomials of degree `< n` per axis exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Anything that can be evaluated pointwise together with its gradient.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` (length `dim`) and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Index arithmetic for the frequency cube `{-K..=K}^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeCube {
    pub dim: usize,
    pub cutoff: usize,
}

impl ModeCube {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        Self { dim, cutoff }
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of the zero frequency.
    pub fn center(&self) -> usize {
        (self.len() - 1) / 2
    }

    /// Number of canonical (nonzero, lexicographically positive) modes.
    pub fn half_len(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn encode(&self, k: &[i32]) -> Option<usize> {
        debug_assert_eq!(k.len(), self.dim);
        let side = self.side();
        let cutoff = self.cutoff as i32;
        let mut lin = 0usize;
        for &ki in k {
            if ki.abs() > cutoff {
                return None;
            }
            lin = lin * side + (ki + cutoff) as usize;
        }
        Some(lin)
    }

    pub fn decode(&self, mut lin: usize, k: &mut [i32]) {
        let side = self.side();
        for slot in k.iter_mut().rev() {
            *slot = (lin % side) as i32 - self.cutoff as i32;
            lin /= side;
        }
    }

    /// Canonical half modes, flattened with stride `dim`, in storage order.
    pub fn half_modes(&self) -> Vec<i32> {
        let mut out = vec![0i32; self.half_len() * self.dim];
        let c = self.center();
        for (j, chunk) in out.chunks_mut(self.dim.max(1)).enumerate() {
            self.decode(c + 1 + j, chunk);
        }
        out
    }
}

fn norm_sq(k: &[i32]) -> f64 {
    k.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

/// Real periodic field stored as a truncated Fourier series.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    dim: usize,
    cutoff: usize,
    mean: f64,
    half: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(dim: usize, cutoff: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let cube = ModeCube::new(dim, cutoff);
        Self {
            dim,
            cutoff,
            mean: 0.0,
            half: vec![Complex64::new(0.0, 0.0); cube.half_len()],
        }
    }

    pub fn constant(dim: usize, cutoff: usize, value: f64) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        f.mean = value;
        f
    }

    /// Builds a field from its zero coefficient and canonical-half coefficients.
    pub fn from_half(dim: usize, cutoff: usize, mean: f64, half: Vec<Complex64>) -> Result<Self> {
        let cube = ModeCube::new(dim, cutoff);
        if half.len() != cube.half_len() {
            return Err(Error::Input(format!(
                "expected {} canonical coefficients, got {}",
                cube.half_len(),
                half.len()
            )));
        }
        Ok(Self {
            dim,
            cutoff,
            mean,
            half,
        })
    }

    /// `sqrt(2) cos(2 pi k.x)`, a unit-norm real mode.
    pub fn cos_mode(dim: usize, cutoff: usize, k: &[i32]) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        f.set_coeff(k, Complex64::new(0.5 * 2f64.sqrt(), 0.0));
        f
    }

    /// `sqrt(2) sin(2 pi k.x)`, a unit-norm real mode.
    pub fn sin_mode(dim: usize, cutoff: usize, k: &[i32]) -> Self {
        let mut f = Self::zeros(dim, cutoff);
        f.set_coeff(k, Complex64::new(0.0, -0.5 * 2f64.sqrt()));
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn cube(&self) -> ModeCube {
        ModeCube::new(self.dim, self.cutoff)
    }

    /// Coefficient of the constant mode, i.e. the integral of the field.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean == 0.0
    }

    /// Canonical-half coefficients in storage order.
    pub fn half_coeffs(&self) -> &[Complex64] {
        &self.half
    }

    pub fn coeff(&self, k: &[i32]) -> Complex64 {
        let cube = self.cube();
        let Some(lin) = cube.encode(k) else {
            return Complex64::new(0.0, 0.0);
        };
        let c = cube.center();
        match lin.cmp(&c) {
            std::cmp::Ordering::Greater => self.half[lin - c - 1],
            std::cmp::Ordering::Less => self.half[c - lin - 1].conj(),
            std::cmp::Ordering::Equal => Complex64::new(self.mean, 0.0),
        }
    }

    /// Sets `coeff(k)` and, implicitly, `coeff(-k)` to its conjugate.
    ///
    /// Panics if `k` lies outside the cube or if `k = 0` and `value` is not real.
    pub fn set_coeff(&mut self, k: &[i32], value: Complex64) {
        let cube = self.cube();
        let lin = cube
            .encode(k)
            .unwrap_or_else(|| panic!("frequency {k:?} outside cutoff {}", self.cutoff));
        let c = cube.center();
        match lin.cmp(&c) {
            std::cmp::Ordering::Greater => self.half[lin - c - 1] = value,
            std::cmp::Ordering::Less => self.half[c - lin - 1] = value.conj(),
            std::cmp::Ordering::Equal => {
                assert!(value.im == 0.0, "zero mode of a real field must be real");
                self.mean = value.re;
            }
        }
    }

    /// Iterates `(k, coeff(k))` over the canonical half.
    pub fn modes(&self) -> impl Iterator<Item = (Vec<i32>, Complex64)> + '_ {
        let cube = self.cube();
        let c = cube.center();
        self.half.iter().enumerate().map(move |(j, &v)| {
            let mut k = vec![0; self.dim];
            cube.decode(c + 1 + j, &mut k);
            (k, v)
        })
    }

    /// Same field with the constant mode removed.
    pub fn centered(&self) -> Self {
        let mut f = self.clone();
        f.mean = 0.0;
        f
    }

    /// Re-expresses the field on another cutoff, truncating or zero-padding.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        let mut out = Self::zeros(self.dim, cutoff);
        out.mean = self.mean;
        let keep = cutoff.min(self.cutoff);
        for (k, v) in self.modes() {
            if k.iter().all(|&ki| ki.unsigned_abs() as usize <= keep) {
                out.set_coeff(&k, v);
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            dim: self.dim,
            cutoff: self.cutoff,
            mean: a * self.mean,
            half: self.half.iter().map(|v| v * a).collect(),
        }
    }

    /// `a * self + b * other`, on the larger of the two cutoffs.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let cutoff = self.cutoff.max(other.cutoff);
        let lhs = self.with_cutoff(cutoff);
        let rhs = other.with_cutoff(cutoff);
        Self {
            dim: self.dim,
            cutoff,
            mean: a * lhs.mean + b * rhs.mean,
            half: lhs
                .half
                .iter()
                .zip(&rhs.half)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }

    /// `sum_k coeff(k) e^{2 pi i k.x}`; the imaginary part is zero by symmetry.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim)?;
        let tw = Twiddles::new(x, self.cutoff);
        let mut k = vec![0; self.dim];
        let cube = self.cube();
        let c = cube.center();
        let mut acc = 0.0;
        for (j, v) in self.half.iter().enumerate() {
            cube.decode(c + 1 + j, &mut k);
            acc += (v * tw.phase(&k)).re;
        }
        Ok(self.mean + 2.0 * acc)
    }

    /// Direct summation over the full cube, keeping the imaginary residue.
    pub fn evaluate_complex(&self, x: &[f64]) -> Result<Complex64> {
        check_point(x, self.dim)?;
        let tw = Twiddles::new(x, self.cutoff);
        let cube = self.cube();
        let mut k = vec![0; self.dim];
        let mut acc = Complex64::new(0.0, 0.0);
        for lin in 0..cube.len() {
            cube.decode(lin, &mut k);
            acc += self.coeff(&k) * tw.phase(&k);
        }
        Ok(acc)
    }

    /// Partial derivatives; component `i` has coefficients `2 pi i k_i coeff(k)`.
    pub fn gradient(&self) -> Vec<FourierField> {
        (0..self.dim)
            .map(|axis| {
                let half = self
                    .modes()
                    .map(|(k, v)| v * Complex64::new(0.0, TWO_PI * k[axis] as f64))
                    .collect();
                Self {
                    dim: self.dim,
                    cutoff: self.cutoff,
                    mean: 0.0,
                    half,
                }
            })
            .collect()
    }

    /// `sqrt(sum_k (1 + 4 pi^2 |k|^2)^s |coeff(k)|^2)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let tail: f64 = self
            .modes()
            .map(|(k, v)| (1.0 + 4.0 * PI * PI * norm_sq(&k)).powf(s) * v.norm_sqr())
            .sum();
        (self.mean * self.mean + 2.0 * tail).sqrt()
    }

    /// L2 inner product computed from coefficients (Parseval).
    pub fn l2_inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let cutoff = self.cutoff.min(other.cutoff);
        let a = self.with_cutoff(cutoff);
        let b = other.with_cutoff(cutoff);
        let tail: f64 = a.half.iter().zip(&b.half).map(|(x, y)| (x * y.conj()).re).sum();
        a.mean * b.mean + 2.0 * tail
    }

    /// Values on the regular lattice with `n` points per axis.
    pub fn to_grid(&self, n: usize) -> Result<GridFunction> {
        let required = 2 * self.cutoff + 1;
        if n < required {
            return Err(Error::Resolution {
                resolution: n,
                required,
            });
        }
        let cube = self.cube();
        let mut k = vec![0; self.dim];
        let full: Vec<Complex64> = (0..cube.len())
            .map(|lin| {
                cube.decode(lin, &mut k);
                self.coeff(&k)
            })
            .collect();
        let side = cube.side();
        let weights: Vec<Vec<Complex64>> = (0..n)
            .map(|x| {
                (0..side)
                    .map(|j| {
                        let freq = j as f64 - self.cutoff as f64;
                        Complex64::from_polar(1.0, TWO_PI * freq * x as f64 / n as f64)
                    })
                    .collect()
            })
            .collect();
        let mut data = full;
        let mut shape = vec![side; self.dim];
        for axis in 0..self.dim {
            data = axis_transform(&data, &shape, axis, &weights);
            shape[axis] = n;
        }
        Ok(GridFunction {
            dim: self.dim,
            resolution: n,
            values: data.into_iter().map(|v| v.re).collect(),
        })
    }

    /// Cached evaluator for repeated point evaluation in hot loops.
    pub fn evaluator(&self) -> FieldEvaluator {
        FieldEvaluator::new(self)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# torus-bvm fourier-field v1 dim={} cutoff={}\n",
            self.dim, self.cutoff
        );
        for i in 0..self.dim {
            let _ = write!(out, "k{},", i + 1);
        }
        out.push_str("re,im\n");
        let mut push = |k: &[i32], v: Complex64| {
            for ki in k {
                let _ = write!(out, "{ki},");
            }
            let _ = writeln!(out, "{},{}", v.re, v.im);
        };
        push(&vec![0; self.dim], Complex64::new(self.mean, 0.0));
        for (k, v) in self.modes() {
            push(&k, v);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let schema = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty file"))?;
        let (dim, cutoff) = parse_field_schema(schema).ok_or_else(|| {
            Error::format(path, format!("bad schema line `{schema}`"))
        })?;
        lines.next();
        let records = lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != dim + 2 {
                    return Err(Error::format(path, format!("bad record `{line}`")));
                }
                let k = cols[..dim]
                    .iter()
                    .map(|c| c.trim().parse::<i32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::format(path, e.to_string()))?;
                let re: f64 = cols[dim].trim().parse().map_err(|e: std::num::ParseFloatError| {
                    Error::format(path, e.to_string())
                })?;
                let im: f64 = cols[dim + 1].trim().parse().map_err(
                    |e: std::num::ParseFloatError| Error::format(path, e.to_string()),
                )?;
                Ok(ModeRecord { k, re, im })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(dim, cutoff, &records).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_records(&self) -> FieldFile {
        let mut modes = vec![ModeRecord {
            k: vec![0; self.dim],
            re: self.mean,
            im: 0.0,
        }];
        modes.extend(self.modes().map(|(k, v)| ModeRecord { k, re: v.re, im: v.im }));
        FieldFile {
            dim: self.dim,
            cutoff: self.cutoff,
            modes,
        }
    }

    /// Rebuilds a field from mode records; records for both `k` and `-k` must
    /// be conjugate to each other.
    pub fn from_records(dim: usize, cutoff: usize, records: &[ModeRecord]) -> Result<Self> {
        let mut f = Self::zeros(dim, cutoff);
        let mut seen = vec![false; f.cube().len()];
        for rec in records {
            if rec.k.len() != dim {
                return Err(Error::Input(format!("record {:?} has wrong dimension", rec.k)));
            }
            let lin = f
                .cube()
                .encode(&rec.k)
                .ok_or_else(|| Error::Input(format!("frequency {:?} outside cutoff", rec.k)))?;
            let value = Complex64::new(rec.re, rec.im);
            let mirror = f.cube().len() - 1 - lin;
            if seen[mirror] {
                let neg: Vec<i32> = rec.k.iter().map(|v| -v).collect();
                let existing = f.coeff(&neg).conj();
                if (existing - value).norm() > 1e-12 * (1.0 + value.norm()) {
                    return Err(Error::Input(format!(
                        "coefficients at {:?} and its negative are not conjugate",
                        rec.k
                    )));
                }
                continue;
            }
            if lin == f.cube().center() && rec.im != 0.0 {
                return Err(Error::Input("zero mode must be real".into()));
            }
            f.set_coeff(&rec.k, value);
            seen[lin] = true;
        }
        Ok(f)
    }
}

fn parse_field_schema(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("# torus-bvm fourier-field v1")?;
    let mut dim = None;
    let mut cutoff = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("dim=") {
            dim = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("cutoff=") {
            cutoff = v.parse().ok();
        }
    }
    Some((dim?, cutoff?))
}

/// One `(k, re, im)` record of a serialized field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub k: Vec<i32>,
    pub re: f64,
    pub im: f64,
}

/// JSON form of a [`FourierField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub dim: usize,
    pub cutoff: usize,
    pub modes: Vec<ModeRecord>,
}

impl FieldFile {
    pub fn into_field(self) -> Result<FourierField> {
        FourierField::from_records(self.dim, self.cutoff, &self.modes)
    }
}

/// True when the first nonzero component of `k` is positive.
pub fn is_canonical(k: &[i32]) -> bool {
    k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Input(format!(
            "point has {} coordinates, field has dimension {dim}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite point {x:?}")));
    }
    Ok(())
}

/// Per-axis tables `e^{2 pi i j x_i}` for `j` in `-K..=K`.
pub(crate) struct Twiddles {
    cutoff: usize,
    side: usize,
    table: Vec<Complex64>,
}

impl Twiddles {
    pub(crate) fn new(x: &[f64], cutoff: usize) -> Self {
        let side = 2 * cutoff + 1;
        let mut table = vec![Complex64::new(1.0, 0.0); side * x.len()];
        for (axis, &xi) in x.iter().enumerate() {
            let base = Complex64::from_polar(1.0, TWO_PI * xi.rem_euclid(1.0));
            let row = &mut table[axis * side..(axis + 1) * side];
            let mut p = Complex64::new(1.0, 0.0);
            for j in 1..=cutoff {
                p *= base;
                row[cutoff + j] = p;
                row[cutoff - j] = p.conj();
            }
        }
        Self {
            cutoff,
            side,
            table,
        }
    }

    #[inline]
    pub(crate) fn phase(&self, k: &[i32]) -> Complex64 {
        let mut p = Complex64::new(1.0, 0.0);
        for (axis, &ki) in k.iter().enumerate() {
            p *= self.table[axis * self.side + (ki + self.cutoff as i32) as usize];
        }
        p
    }
}

/// Evaluates a fixed field and its gradient at many points.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    dim: usize,
    cutoff: usize,
    mean: f64,
    modes: Vec<i32>,
    coeffs: Vec<Complex64>,
}

impl FieldEvaluator {
    pub fn new(field: &FourierField) -> Self {
        let cube = field.cube();
        // Skip zero coefficients; representors are often sparse.
        let all = cube.half_modes();
        let mut modes = Vec::new();
        let mut coeffs = Vec::new();
        for (j, &v) in field.half.iter().enumerate() {
            if v != Complex64::new(0.0, 0.0) {
                modes.extend_from_slice(&all[j * field.dim..(j + 1) * field.dim]);
                coeffs.push(v);
            }
        }
        Self {
            dim: field.dim,
            cutoff: field.cutoff,
            mean: field.mean,
            modes,
            coeffs,
        }
    }
}

impl ScalarField for FieldEvaluator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let tw = Twiddles::new(x, self.cutoff);
        let acc: f64 = self
            .modes
            .chunks(self.dim)
            .zip(&self.coeffs)
            .map(|(k, v)| (v * tw.phase(k)).re)
            .sum();
        self.mean + 2.0 * acc
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let tw = Twiddles::new(x, self.cutoff);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for (k, v) in self.modes.chunks(self.dim).zip(&self.coeffs) {
            let z = v * tw.phase(k);
            acc += z.re;
            // d/dx_i Re(z) = Re(2 pi i k_i z) = -2 pi k_i Im(z)
            for (g, &ki) in grad.iter_mut().zip(k) {
                *g -= ki as f64 * z.im;
            }
        }
        grad.iter_mut().for_each(|g| *g *= 2.0 * TWO_PI);
        self.mean + 2.0 * acc
    }
}

impl ScalarField for FourierField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluator().value(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluator().value_and_gradient(x, grad)
    }
}

/// Applies a dense linear map along one axis of a row-major complex array.
///
/// `weights[out][in]`; the axis length changes from `shape[axis]` to
/// `weights.len()`.
fn axis_transform(
    data: &[Complex64],
    shape: &[usize],
    axis: usize,
    weights: &[Vec<Complex64>],
) -> Vec<Complex64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len_in = shape[axis];
    let len_out = weights.len();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * len_out * inner];
    for o in 0..outer {
        for (j, w) in weights.iter().enumerate() {
            let dst = &mut out[(o * len_out + j) * inner..(o * len_out + j + 1) * inner];
            for (x, &wx) in w.iter().enumerate().take(len_in) {
                let src = &data[(o * len_in + x) * inner..(o * len_in + x + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wx * s;
                }
            }
        }
    }
    out
}

/// Values on the regular lattice `{0, 1/n, ..., (n-1)/n}^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    dim: usize,
    resolution: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(dim: usize, resolution: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution.pow(dim as u32) {
            return Err(Error::Input(format!(
                "{} values do not fill a {resolution}^{dim} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("grid values must be finite".into()));
        }
        Ok(Self {
            dim,
            resolution,
            values,
        })
    }

    pub fn from_fn(dim: usize, resolution: usize, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let len = resolution.pow(dim as u32);
        let mut x = vec![0.0; dim];
        let values = (0..len)
            .map(|idx| {
                lattice_point(idx, dim, resolution, &mut x);
                f(&x)
            })
            .collect();
        Self {
            dim,
            resolution,
            values,
        }
    }

    /// Samples any pointwise field on the lattice.
    pub fn sample(field: &dyn ScalarField, resolution: usize) -> Self {
        Self::from_fn(field.dim(), resolution, |x| field.value(x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of lattice point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        lattice_point(idx, self.dim, self.resolution, &mut x);
        x
    }

    /// Lattice average; equals the torus integral for band-limited integrands.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dim: self.dim,
            resolution: self.resolution,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        assert_eq!(self.resolution, other.resolution, "resolution mismatch");
        Self {
            dim: self.dim,
            resolution: self.resolution,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Lattice quadrature of the product of two grid functions.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Lattice Fourier coefficients `(1/n^d) sum_x g(x) e^{-2 pi i k.x}` for
    /// `|k|_inf <= cutoff`. Exact for trigonometric polynomials of degree
    /// `<= cutoff` when `n >= 2 cutoff + 1`.
    pub fn project(&self, cutoff: usize) -> Result<FourierField> {
        let required = 2 * cutoff + 1;
        if self.resolution < required {
            return Err(Error::Resolution {
                resolution: self.resolution,
                required,
            });
        }
        let full = self.dft(cutoff);
        let cube = ModeCube::new(self.dim, cutoff);
        let c = cube.center();
        let half = full[c + 1..].to_vec();
        FourierField::from_half(self.dim, cutoff, full[c].re, half)
    }

    /// Full-cube lattice DFT, laid out in [`ModeCube`] order.
    pub fn dft(&self, cutoff: usize) -> Vec<Complex64> {
        let n = self.resolution;
        let side = 2 * cutoff + 1;
        let scale = 1.0 / n as f64;
        let weights: Vec<Vec<Complex64>> = (0..side)
            .map(|j| {
                let freq = j as f64 - cutoff as f64;
                (0..n)
                    .map(|x| Complex64::from_polar(scale, -TWO_PI * freq * x as f64 / n as f64))
                    .collect()
            })
            .collect();
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        let mut shape = vec![n; self.dim];
        for axis in 0..self.dim {
            data = axis_transform(&data, &shape, axis, &weights);
            shape[axis] = side;
        }
        data
    }
}

fn lattice_point(mut idx: usize, dim: usize, n: usize, x: &mut [f64]) {
    for axis in (0..dim).rev() {
        x[axis] = (idx % n) as f64 / n as f64;
        idx /= n;
    }
}
