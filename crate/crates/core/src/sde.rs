//! Euler–Maruyama simulation of `dX_t = grad B(X_t) dt + dW_t` and the
//! benchmark potentials.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FourierField, ScalarField};
use crate::rng;

/// Maps each coordinate into `(0, 1]`; integers map to 1, not 0.
pub fn wrap_to_torus(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| wrap_coordinate(v)).collect()
}

#[inline]
fn wrap_coordinate(v: f64) -> f64 {
    let w = v - v.floor();
    if w == 0.0 {
        1.0
    } else {
        w
    }
}

/// `amplitude * exp(-(sx x - cx)^2 - (sy y - cy)^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl Bump {
    const fn new(amplitude: f64, sx: f64, cx: f64, sy: f64, cy: f64) -> Self {
        Self {
            amplitude,
            scale: [sx, sy],
            offset: [cx, cy],
        }
    }

    #[inline]
    fn eval(&self, x: f64, y: f64, grad: &mut [f64; 2]) -> f64 {
        let u = self.scale[0] * x - self.offset[0];
        let v = self.scale[1] * y - self.offset[1];
        let val = self.amplitude * (-(u * u) - v * v).exp();
        grad[0] -= 2.0 * self.scale[0] * u * val;
        grad[1] -= 2.0 * self.scale[1] * v * val;
        val
    }
}

/// Identifier of a benchmark potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TruthId {
    B1,
    B2,
    B3,
}

impl TruthId {
    pub const ALL: [TruthId; 3] = [TruthId::B1, TruthId::B2, TruthId::B3];

    pub fn index(self) -> u64 {
        match self {
            TruthId::B1 => 1,
            TruthId::B2 => 2,
            TruthId::B3 => 3,
        }
    }
}

impl fmt::Display for TruthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TruthId::B1 => "B1",
            TruthId::B2 => "B2",
            TruthId::B3 => "B3",
        };
        f.write_str(s)
    }
}

impl FromStr for TruthId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B1" | "b1" => Ok(TruthId::B1),
            "B2" | "b2" => Ok(TruthId::B2),
            "B3" | "b3" => Ok(TruthId::B3),
            other => Err(Error::UnknownTruth(other.to_string())),
        }
    }
}

const B1_BUMPS: [Bump; 2] = [
    Bump::new(1.0, 7.5, 5.0, 7.5, 5.0),
    Bump::new(1.0, 7.5, 2.5, 7.5, 2.5),
];

const B2_BUMPS: [Bump; 2] = [
    Bump::new(1.0, 7.5, 5.0, 7.5, 5.0),
    Bump::new(-1.0, 7.5, 2.5, 7.5, 2.5),
];

const B3_BUMPS: [Bump; 4] = [
    Bump::new(1.0, 7.5, 5.5, 7.5, 5.5),
    Bump::new(0.75, 5.0, 1.25, 7.5, 5.5),
    Bump::new(1.25, 7.5, 5.5, 5.0, 1.25),
    Bump::new(1.0, 7.5, 2.0, 7.5, 2.0),
];

/// A potential on the two-torus: an additive constant plus Gaussian bumps.
///
/// The bumps are periodized: the point is wrapped into `(0,1]^2` and the
/// nine nearest lattice images of every bump are summed. Images further away
/// contribute below `e^{-25}`, so the result is smooth across cell faces and
/// exactly periodic.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub id: TruthId,
    pub constant: f64,
    pub bumps: Vec<Bump>,
}

impl GroundTruth {
    pub fn new(id: TruthId) -> Self {
        let (constant, bumps) = match id {
            TruthId::B1 => (0.0, B1_BUMPS.to_vec()),
            TruthId::B2 => (2.0, B2_BUMPS.to_vec()),
            TruthId::B3 => (0.0, B3_BUMPS.to_vec()),
        };
        Self {
            id,
            constant,
            bumps,
        }
    }

    /// Unperiodized closed form, valid for points inside the unit cell.
    pub fn closed_form(&self, x: &[f64], grad: &mut [f64; 2]) -> f64 {
        *grad = [0.0; 2];
        self.constant
            + self
                .bumps
                .iter()
                .map(|b| b.eval(x[0], x[1], grad))
                .sum::<f64>()
    }
}

/// Looks up a benchmark potential by name (`B1`, `B2`, `B3`).
pub fn ground_truth(id: &str) -> Result<GroundTruth> {
    Ok(GroundTruth::new(id.parse()?))
}

impl ScalarField for GroundTruth {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = [0.0; 2];
        self.value_and_gradient(x, &mut g)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (wx, wy) = (wrap_coordinate(x[0]), wrap_coordinate(x[1]));
        let mut g = [0.0; 2];
        let mut acc = self.constant;
        for b in &self.bumps {
            for mx in [-1.0, 0.0, 1.0] {
                for my in [-1.0, 0.0, 1.0] {
                    acc += b.eval(wx + mx, wy + my, &mut g);
                }
            }
        }
        grad[..2].copy_from_slice(&g);
        acc
    }
}

/// The zero potential in any dimension (Brownian motion).
#[derive(Clone, Copy, Debug)]
pub struct FlatPotential(pub usize);

impl ScalarField for FlatPotential {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn value_and_gradient(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        0.0
    }
}

/// Either a benchmark potential or a user-supplied Fourier field.
#[derive(Clone, Debug)]
pub enum Potential {
    Truth(GroundTruth),
    Fourier(crate::field::FieldEvaluator),
}

impl Potential {
    pub fn from_field(field: &FourierField) -> Self {
        Potential::Fourier(field.evaluator())
    }
}

impl ScalarField for Potential {
    fn dim(&self) -> usize {
        match self {
            Potential::Truth(t) => t.dim(),
            Potential::Fourier(f) => f.dim(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Truth(t) => t.value(x),
            Potential::Fourier(f) => f.value(x),
        }
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Potential::Truth(t) => t.value_and_gradient(x, grad),
            Potential::Fourier(f) => f.value_and_gradient(x, grad),
        }
    }
}

/// A discretized path `x_0, ..., x_N` in `R^d` with its driving increments.
///
/// `noise[r]` is stored as `(x_{r+1} - x_r) - grad B(x_r) dt`, so the
/// reconstruction identity holds bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    dt: f64,
    seed: u64,
    points: Vec<f64>,
    noise: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dim: usize, dt: f64, seed: u64, points: Vec<f64>, noise: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::Input("trajectory needs at least one point".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Input(format!("time step must be positive, got {dt}")));
        }
        if let Some(w) = &noise {
            if w.len() + dim != points.len() {
                return Err(Error::Input("noise record must have one entry per step".into()));
            }
        }
        Ok(Self {
            dim,
            dt,
            seed,
            points,
            noise,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.points.len() / self.dim - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn point(&self, r: usize) -> &[f64] {
        &self.points[r * self.dim..(r + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn noise(&self) -> Option<&[f64]> {
        self.noise.as_deref()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.point(self.steps())
    }

    /// The same path traversed backwards, without a noise record.
    pub fn reversed(&self) -> Self {
        let points = self
            .points
            .chunks(self.dim)
            .rev()
            .flat_map(|p| p.iter().copied())
            .collect();
        Self {
            dim: self.dim,
            dt: self.dt,
            seed: self.seed,
            points,
            noise: None,
        }
    }

    /// Checks `x_{r+1} - x_r - grad B(x_r) dt == noise_r` exactly.
    pub fn check_reconstruction(&self, potential: &dyn ScalarField) -> Result<()> {
        let noise = self
            .noise
            .as_ref()
            .ok_or_else(|| Error::Input("trajectory has no noise record".into()))?;
        let mut grad = vec![0.0; self.dim];
        for r in 0..self.steps() {
            let (x, next) = (self.point(r), self.point(r + 1));
            potential.value_and_gradient(x, &mut grad);
            for i in 0..self.dim {
                let w = (next[i] - x[i]) - grad[i] * self.dt;
                if w != noise[r * self.dim + i] {
                    return Err(Error::Input(format!(
                        "reconstruction identity fails at step {r}, axis {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("# torus-bvm trajectory v1\nd,dt,steps,seed\n");
        let _ = writeln!(out, "{},{},{},{}", self.dim, self.dt, self.steps(), self.seed);
        let names: Vec<String> = (1..=self.dim)
            .map(|i| format!("x{i}"))
            .chain((1..=self.dim).map(|i| format!("w{i}")))
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for r in 0..=self.steps() {
            let x = self.point(r);
            let mut cols: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            match (&self.noise, r < self.steps()) {
                (Some(w), true) => cols.extend(
                    w[r * self.dim..(r + 1) * self.dim]
                        .iter()
                        .map(|v| v.to_string()),
                ),
                _ => cols.extend(std::iter::repeat_n(String::new(), self.dim)),
            }
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    /// Loads a trajectory; when `potential` is given the reconstruction
    /// identity is verified for every step.
    pub fn read_csv(path: &Path, potential: Option<&dyn ScalarField>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::format(path, reason);
        let mut lines = text.lines();
        if lines.next() != Some("# torus-bvm trajectory v1") {
            return Err(bad("missing schema line".into()));
        }
        lines.next();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let h: Vec<&str> = header.split(',').collect();
        if h.len() != 4 {
            return Err(bad(format!("bad header `{header}`")));
        }
        let dim: usize = h[0].parse().map_err(|_| bad("bad dimension".into()))?;
        let dt: f64 = h[1].parse().map_err(|_| bad("bad time step".into()))?;
        let steps: usize = h[2].parse().map_err(|_| bad("bad step count".into()))?;
        let seed: u64 = h[3].parse().map_err(|_| bad("bad seed".into()))?;
        lines.next();
        let mut points = Vec::with_capacity((steps + 1) * dim);
        let mut noise = Vec::with_capacity(steps * dim);
        let mut has_noise = true;
        for (r, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 2 * dim {
                return Err(bad(format!("row {r} has {} columns", cols.len())));
            }
            for c in &cols[..dim] {
                points.push(c.parse::<f64>().map_err(|_| bad(format!("row {r}: bad number `{c}`")))?);
            }
            if r < steps {
                if cols[dim].is_empty() {
                    has_noise = false;
                } else {
                    for c in &cols[dim..] {
                        noise.push(
                            c.parse::<f64>()
                                .map_err(|_| bad(format!("row {r}: bad number `{c}`")))?,
                        );
                    }
                }
            }
        }
        if points.len() != (steps + 1) * dim {
            return Err(bad(format!(
                "expected {} rows, found {}",
                steps + 1,
                points.len() / dim.max(1)
            )));
        }
        let noise = if has_noise { Some(noise) } else { None };
        let traj = Self::new(dim, dt, seed, points, noise).map_err(|e| bad(e.to_string()))?;
        if let Some(p) = potential {
            traj.check_reconstruction(p).map_err(|e| bad(e.to_string()))?;
        }
        Ok(traj)
    }
}

/// Number of Euler steps covering `horizon`, rounding up.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let n = horizon / dt;
    let rounded = n.round();
    if (n - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        n.ceil() as usize
    }
}

/// Simulates the diffusion with Euler–Maruyama,
/// `x_{r+1} = x_r + grad B(x_r) dt + sqrt(dt) xi_r`.
pub fn simulate(
    potential: &dyn ScalarField,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
    }
    let steps = step_count(horizon, dt);
    let mut rng = rng::generator(seed);
    let sqrt_dt = dt.sqrt();
    let increments = (0..steps * x0.len()).map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal));
    simulate_driven(potential, x0, dt, steps, increments, seed)
}

/// Euler–Maruyama driven by caller-supplied Brownian increments (already
/// scaled by `sqrt(dt)`), consumed `d` at a time.
pub fn simulate_driven(
    potential: &dyn ScalarField,
    x0: &[f64],
    dt: f64,
    steps: usize,
    increments: impl IntoIterator<Item = f64>,
    seed: u64,
) -> Result<Trajectory> {
    let dim = x0.len();
    if dim != potential.dim() {
        return Err(Error::Input(format!(
            "initial point has dimension {dim}, potential has {}",
            potential.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("initial point must be finite".into()));
    }
    let mut points = Vec::with_capacity((steps + 1) * dim);
    let mut noise = Vec::with_capacity(steps * dim);
    points.extend_from_slice(x0);
    let mut grad = vec![0.0; dim];
    let mut x = x0.to_vec();
    let mut next = vec![0.0; dim];
    let mut incs = increments.into_iter();
    for r in 0..steps {
        potential.value_and_gradient(&x, &mut grad);
        for i in 0..dim {
            let db = incs
                .next()
                .ok_or_else(|| Error::Input("not enough Brownian increments".into()))?;
            next[i] = x[i] + grad[i] * dt + db;
        }
        if next.iter().chain(&grad).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: r });
        }
        for i in 0..dim {
            noise.push((next[i] - x[i]) - grad[i] * dt);
        }
        points.extend_from_slice(&next);
        std::mem::swap(&mut x, &mut next);
    }
    Trajectory::new(dim, dt, seed, points, Some(noise))
}
