//! Repeated simulate → posterior → plug-in credible interval study.
//!
//! Each replication draws a trajectory from a benchmark potential, forms the
//! conjugate posterior, pushes `M` posterior draws through every functional
//! and records the credible interval, the posterior mean and the
//! Gaussian-limit diagnostics. Cells are indexed by (truth, horizon,
//! functional).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::RealBasis;
use crate::error::{Error, Result};
use crate::field::{FourierField, GridFunction};
use crate::functionals::{self, FunctionalSpec};
use crate::pde::{self, EfficiencyReport};
use crate::posterior::{self, conjugate_posterior};
use crate::priors::{MaternPrior, VarianceConvention};
use crate::rng::{derive_seed, label};
use crate::sde::{simulate, GroundTruth, TruthId};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub smoothness: f64,
    pub cutoff: usize,
    #[serde(default)]
    pub convention: VarianceConvention,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truths: Vec<TruthId>,
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub replications: usize,
    /// Posterior draws per replication.
    pub samples: usize,
    /// Credible level, e.g. 0.95.
    pub level: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
    /// Lattice resolution per axis for all quadrature.
    pub grid: usize,
    pub prior: PriorConfig,
    pub functionals: Vec<FunctionalSpec>,
    /// Representor cutoff; defaults to `2K`.
    #[serde(default)]
    pub representor_cutoff: Option<usize>,
    /// Galerkin cutoff; defaults to `max(2K, 8)`.
    #[serde(default)]
    pub galerkin_cutoff: Option<usize>,
    /// Compute efficient variances and KS diagnostics.
    #[serde(default = "yes")]
    pub bvm: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

fn yes() -> bool {
    true
}

fn default_bins() -> usize {
    40
}

fn standard_functionals() -> Vec<FunctionalSpec> {
    vec![
        FunctionalSpec::PowerB { q: 2 },
        FunctionalSpec::PowerB { q: 4 },
        FunctionalSpec::EntropyMu,
    ]
}

impl ExperimentConfig {
    /// Small study that runs in minutes on one core.
    pub fn desk() -> Self {
        Self {
            truths: TruthId::ALL.to_vec(),
            horizons: vec![20.0, 50.0],
            dt: 1e-3,
            replications: 50,
            samples: 500,
            level: 0.95,
            seed: 20_240_601,
            x0: vec![1.0, 1.0],
            grid: 64,
            prior: PriorConfig {
                smoothness: 3.0,
                cutoff: 3,
                // the Sobolev scaling collapses the posterior onto the prior at these horizons
                convention: VarianceConvention::Printed,
                amplitude: 1.0,
            },
            functionals: standard_functionals(),
            representor_cutoff: None,
            galerkin_cutoff: None,
            bvm: true,
            histogram_bins: 40,
            threads: 0,
        }
    }

    /// Full-size study: finer step, longer horizons, more replications.
    pub fn paper() -> Self {
        Self {
            horizons: vec![50.0, 100.0],
            dt: 1e-4,
            replications: 250,
            samples: 1000,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    /// Parses TOML. A top-level `preset = "desk"` supplies defaults that the
    /// remaining keys override (tables merge recursively).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg = if let Some(p) = value.remove("preset") {
            let name = p
                .as_str()
                .ok_or_else(|| Error::Config("`preset` must be a string".into()))?;
            let base = toml::Table::try_from(Self::preset(name)?).map_err(|e| Error::Config(e.to_string()))?;
            let merged = merge(base, value);
            merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        } else {
            value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        };
        let cfg: Self = cfg;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn representor_cutoff(&self) -> usize {
        self.representor_cutoff.unwrap_or(2 * self.prior.cutoff)
    }

    pub fn galerkin_cutoff(&self) -> usize {
        self.galerkin_cutoff.unwrap_or((2 * self.prior.cutoff).max(8))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("credible level must lie in (0, 1)");
        }
        if self.samples < 2 {
            return bad("need at least 2 posterior samples");
        }
        if self.replications < 1 {
            return bad("need at least 1 replication");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("time step must be positive");
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("horizons must be positive");
        }
        if self.truths.is_empty() || self.functionals.is_empty() {
            return bad("need at least one truth and one functional");
        }
        if self.dim() != 2 {
            return bad("benchmark potentials live on the two-torus; x0 must have 2 coordinates");
        }
        if self.grid < 2 * self.prior.cutoff + 1 || self.grid < 2 * self.representor_cutoff() + 1 {
            return bad("grid is too coarse for the prior or representor cutoff");
        }
        if self.bvm && self.grid < 4 * self.galerkin_cutoff() + 1 {
            return bad("grid must be at least 4 K_G + 1 for the elliptic solver");
        }
        for f in &self.functionals {
            f.validate()?;
        }
        MaternPrior::new(self.dim(), self.prior.smoothness, self.prior.cutoff, 1.0).validate()
    }

    fn matern(&self, horizon: f64) -> MaternPrior {
        MaternPrior::new(self.dim(), self.prior.smoothness, self.prior.cutoff, horizon)
            .with_convention(self.prior.convention)
            .with_amplitude(self.prior.amplitude)
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Everything about one truth that does not depend on the data.
pub struct TruthContext {
    pub truth: GroundTruth,
    /// Centered `B0` on the lattice.
    pub b0: GridFunction,
    pub values: Vec<f64>,
    pub efficiency: Vec<Option<EfficiencyReport>>,
}

impl TruthContext {
    pub fn new(config: &ExperimentConfig, id: TruthId) -> Result<Self> {
        let truth = GroundTruth::new(id);
        let raw = GridFunction::sample(&truth, config.grid);
        let mean = raw.integrate();
        let b0 = raw.map(|v| v - mean);
        let values = config
            .functionals
            .iter()
            .map(|f| functionals::evaluate_grid(f, &b0))
            .collect::<Result<Vec<_>>>()?;
        let efficiency = if config.bvm {
            let res = pde::Resolution {
                grid: config.grid,
                representor_cutoff: config.representor_cutoff(),
                galerkin_cutoff: config.galerkin_cutoff(),
            };
            config
                .functionals
                .iter()
                .map(|f| pde::efficient_variance(&b0, f, res).map(Some))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![None; config.functionals.len()]
        };
        Ok(Self {
            truth,
            b0,
            values,
            efficiency,
        })
    }
}

/// One (replication, functional) record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub truth: TruthId,
    pub horizon: f64,
    pub functional: String,
    pub replication: usize,
    pub ok: bool,
    pub truth_value: f64,
    pub post_mean: Option<f64>,
    pub post_median: Option<f64>,
    pub post_sd: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub ci_length: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<f64>,
    pub efficient_variance: Option<f64>,
    pub estimator: Option<f64>,
    /// KS distance of `sqrt(T)(Psi(B) - estimator)` to `N(0, V)`.
    pub ks_efficient: Option<f64>,
    /// Same, centred at the posterior mean of `Psi`.
    pub ks_centered: Option<f64>,
    /// Sample variance of `sqrt(T)(Psi(B) - estimator)`.
    pub rescaled_variance: Option<f64>,
    pub message: Option<String>,
}

impl Row {
    fn failed(truth: TruthId, horizon: f64, functional: String, replication: usize, truth_value: f64, msg: String) -> Self {
        Self {
            truth,
            horizon,
            functional,
            replication,
            ok: false,
            truth_value,
            post_mean: None,
            post_median: None,
            post_sd: None,
            ci_lower: None,
            ci_upper: None,
            ci_length: None,
            covered: None,
            error: None,
            efficient_variance: None,
            estimator: None,
            ks_efficient: None,
            ks_centered: None,
            rescaled_variance: None,
            message: Some(msg),
        }
    }
}

/// Gaussian-limit diagnostic for one set of plug-in posterior samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BvmReport {
    pub ks: f64,
    pub mean: f64,
    pub variance: f64,
    /// `sqrt(T)(Psi(B_i) - center)`.
    pub rescaled: Vec<f64>,
}

/// Rescales `sqrt(T)(Psi(B_i) - center)` and compares with `N(0, V)`.
pub fn bvm_diagnostic(samples: &[f64], center: f64, horizon: f64, variance: f64) -> Result<BvmReport> {
    if !(variance > 0.0) {
        return Err(Error::Input(format!("efficient variance must be positive, got {variance}")));
    }
    let root = horizon.sqrt();
    let rescaled: Vec<f64> = samples.iter().map(|s| root * (s - center)).collect();
    Ok(BvmReport {
        ks: stats::ks_normal(&rescaled, 0.0, variance)?,
        mean: stats::mean(&rescaled),
        variance: stats::sample_variance(&rescaled),
        rescaled,
    })
}

/// Per-replication output beyond the rows.
pub struct Replication {
    pub rows: Vec<Row>,
    /// Posterior mean coordinates, kept for surface plots.
    pub mean_coords: Option<Vec<f64>>,
    /// Rescaled plug-in samples per functional, kept for histograms.
    pub rescaled: Vec<Option<Vec<f64>>>,
}

/// Precomputed per-horizon objects shared by all replications.
pub struct HorizonContext {
    pub index: usize,
    pub horizon: f64,
    pub basis: RealBasis,
    pub prior_variances: Vec<f64>,
    /// Basis values on the lattice, one row per point.
    pub grid_matrix: DMatrix<f64>,
}

impl HorizonContext {
    pub fn new(config: &ExperimentConfig, index: usize) -> Result<Self> {
        let horizon = config.horizons[index];
        let prior = config.matern(horizon);
        let basis = prior.basis();
        Ok(Self {
            index,
            horizon,
            prior_variances: prior.variances(),
            grid_matrix: basis.grid_matrix(config.grid)?,
            basis,
        })
    }
}

/// Simulates, forms the posterior and evaluates every functional.
pub fn run_replication(
    config: &ExperimentConfig,
    truth: &TruthContext,
    hctx: &HorizonContext,
    rep: usize,
) -> Replication {
    let names: Vec<String> = config.functionals.iter().map(|f| f.label()).collect();
    match replicate(config, truth, hctx, rep, &names) {
        Ok(r) => r,
        Err(e) => Replication {
            rows: names
                .iter()
                .zip(&truth.values)
                .map(|(n, &v)| Row::failed(truth.truth.id, hctx.horizon, n.clone(), rep, v, e.to_string()))
                .collect(),
            mean_coords: None,
            rescaled: vec![None; names.len()],
        },
    }
}

fn replicate(
    config: &ExperimentConfig,
    truth: &TruthContext,
    hctx: &HorizonContext,
    rep: usize,
    names: &[String],
) -> Result<Replication> {
    let id = truth.truth.id;
    let key = |purpose: &str| derive_seed(config.seed, &[id.index(), hctx.index as u64, rep as u64, label(purpose)]);
    let traj = simulate(&truth.truth, &config.x0, hctx.horizon, config.dt, key("simulate"))?;
    let (sigma, h) = posterior::sufficient_statistics(&traj, &hctx.basis)?;
    let post = conjugate_posterior(&sigma, &h, &hctx.prior_variances)?;
    let draws = post.sample_coords(key("posterior"), config.samples);
    let grids = &hctx.grid_matrix * &draws;
    let n = config.grid;
    let d = config.dim();
    let sample_grids: Vec<GridFunction> = grids
        .column_iter()
        .map(|c| GridFunction::new(d, n, c.iter().copied().collect()))
        .collect::<Result<_>>()?;
    let alpha = 1.0 - config.level;
    let mut rows = Vec::with_capacity(names.len());
    let mut rescaled_all = Vec::with_capacity(names.len());
    for (fi, spec) in config.functionals.iter().enumerate() {
        let values = sample_grids
            .iter()
            .map(|g| functionals::evaluate_grid(spec, g))
            .collect::<Result<Vec<f64>>>()?;
        let sorted = stats::sorted(&values);
        let lo = stats::quantile_sorted(&sorted, alpha / 2.0);
        let hi = stats::quantile_sorted(&sorted, 1.0 - alpha / 2.0);
        let pm = stats::mean(&values);
        let tv = truth.values[fi];
        let mut row = Row {
            truth: id,
            horizon: hctx.horizon,
            functional: names[fi].clone(),
            replication: rep,
            ok: true,
            truth_value: tv,
            post_mean: Some(pm),
            post_median: Some(stats::quantile_sorted(&sorted, 0.5)),
            post_sd: Some(stats::sample_variance(&values).sqrt()),
            ci_lower: Some(lo),
            ci_upper: Some(hi),
            ci_length: Some(hi - lo),
            covered: Some(lo <= tv && tv <= hi),
            error: Some(pm - tv),
            efficient_variance: None,
            estimator: None,
            ks_efficient: None,
            ks_centered: None,
            rescaled_variance: None,
            message: None,
        };
        let mut kept = None;
        if let Some(eff) = &truth.efficiency[fi] {
            row.efficient_variance = Some(eff.variance);
            let est = pde::efficient_estimator(&traj, &eff.solution, tv)?;
            row.estimator = Some(est);
            if eff.variance > 0.0 {
                let a = bvm_diagnostic(&values, est, hctx.horizon, eff.variance)?;
                let b = bvm_diagnostic(&values, pm, hctx.horizon, eff.variance)?;
                row.ks_efficient = Some(a.ks);
                row.ks_centered = Some(b.ks);
                row.rescaled_variance = Some(a.variance);
                kept = Some(a.rescaled);
            }
        }
        rows.push(row);
        rescaled_all.push(kept);
    }
    Ok(Replication {
        rows,
        mean_coords: Some(post.mean().as_slice().to_vec()),
        rescaled: rescaled_all,
    })
}

/// Summary of one (truth, horizon, functional) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub truth: TruthId,
    pub horizon: f64,
    pub functional: String,
    pub successes: usize,
    pub failures: usize,
    pub coverage: Option<f64>,
    pub mean_length: Option<f64>,
    pub median_length: Option<f64>,
    pub rmse: Option<f64>,
    pub error_sd: Option<f64>,
    pub median_ks: Option<f64>,
    pub valid: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub rows: Vec<Row>,
    pub cells: Vec<Cell>,
    /// Rescaled samples of replication 0 per cell, for histograms.
    pub histograms: BTreeMap<(TruthId, String, String), Vec<f64>>,
    /// Posterior mean of replication 0 per (truth, horizon).
    pub surfaces: BTreeMap<(TruthId, String), FourierField>,
}

impl ExperimentReport {
    pub fn any_invalid(&self) -> bool {
        self.cells.iter().any(|c| !c.valid)
    }

    pub fn cell(&self, truth: TruthId, horizon: f64, functional: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.truth == truth && c.horizon == horizon && c.functional == functional)
    }
}

/// Groups rows by cell in first-appearance order and summarizes each.
pub fn aggregate(rows: &[Row]) -> Vec<Cell> {
    let mut order: Vec<(TruthId, u64, String)> = Vec::new();
    let mut groups: BTreeMap<(TruthId, u64, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let key = (r.truth, r.horizon.to_bits(), r.functional.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let ok: Vec<&&Row> = rs.iter().filter(|r| r.ok).collect();
            let failures = rs.len() - ok.len();
            let valid = !ok.is_empty() && (failures as f64) <= 0.1 * rs.len() as f64;
            let summarize = |f: &dyn Fn(&Row) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let covered = summarize(&|r| r.covered.map(|c| if c { 1.0 } else { 0.0 }));
            let lengths = summarize(&|r| r.ci_length);
            let errors = summarize(&|r| r.error);
            let ks = summarize(&|r| r.ks_efficient);
            let opt = |v: &Vec<f64>, f: &dyn Fn(&[f64]) -> f64| if v.is_empty() { None } else { Some(f(v)) };
            Cell {
                truth: key.0,
                horizon: f64::from_bits(key.1),
                functional: key.2.clone(),
                successes: ok.len(),
                failures,
                coverage: opt(&covered, &stats::mean),
                mean_length: opt(&lengths, &stats::mean),
                median_length: opt(&lengths, &stats::median),
                rmse: opt(&errors, &|e| (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()),
                error_sd: opt(&errors, &|e| stats::sample_variance(e).sqrt()),
                median_ks: opt(&ks, &stats::median),
                valid,
            }
        })
        .collect()
}

fn worker_count(config: &ExperimentConfig, jobs: usize) -> usize {
    let n = if config.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        config.threads
    };
    n.clamp(1, jobs.max(1))
}

/// Runs every cell. Progress lines go to standard error when `progress` is set.
pub fn run_experiment(config: &ExperimentConfig, progress: bool) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::default();
    for &id in &config.truths {
        let truth = TruthContext::new(config, id)?;
        for hi in 0..config.horizons.len() {
            let hctx = HorizonContext::new(config, hi)?;
            let jobs = config.replications;
            let next = AtomicUsize::new(0);
            let results: Mutex<Vec<Option<Replication>>> = Mutex::new((0..jobs).map(|_| None).collect());
            std::thread::scope(|scope| {
                for _ in 0..worker_count(config, jobs) {
                    scope.spawn(|| loop {
                        let rep = next.fetch_add(1, Ordering::Relaxed);
                        if rep >= jobs {
                            break;
                        }
                        let out = run_replication(config, &truth, &hctx, rep);
                        if progress {
                            let status = if out.rows.iter().all(|r| r.ok) { "ok" } else { "FAILED" };
                            eprintln!("[{id} T={} rep {}/{}] {status}", hctx.horizon, rep + 1, jobs);
                        }
                        results.lock().expect("no worker panics while holding the lock")[rep] = Some(out);
                    });
                }
            });
            let tkey = format_horizon(hctx.horizon);
            for (rep, out) in results.into_inner().expect("workers finished").into_iter().enumerate() {
                let out = out.expect("every replication ran");
                if rep == 0 {
                    if let Some(c) = &out.mean_coords {
                        report.surfaces.insert((id, tkey.clone()), hctx.basis.to_field(c));
                    }
                    for (row, samples) in out.rows.iter().zip(out.rescaled) {
                        if let Some(s) = samples {
                            report.histograms.insert((id, tkey.clone(), row.functional.clone()), s);
                        }
                    }
                }
                report.rows.extend(out.rows);
            }
        }
    }
    let failed = report.rows.iter().filter(|r| !r.ok).count();
    if progress && failed > 0 {
        eprintln!("{failed} replication rows failed and were excluded");
    }
    report.cells = aggregate(&report.rows);
    Ok(report)
}

fn format_horizon(t: f64) -> String {
    format!("{t}")
}

/// File-name friendly functional label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '_' => Some(c),
            '=' | '(' => Some('_'),
            _ => None,
        })
        .collect::<String>()
        .replace("__", "_")
        .trim_end_matches('_')
        .to_string()
}

pub const ROWS_SCHEMA: &str = "# torus-bvm rows v1";
pub const TABLE_SCHEMA: &str = "# torus-bvm table1 v1";

pub fn write_rows(rows: &[Row], path: &Path) -> Result<()> {
    let mut buf = format!("{ROWS_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(ROW_HEADER).map_err(|e| Error::format(path, e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

const ROW_HEADER: [&str; 20] = [
    "truth",
    "horizon",
    "functional",
    "replication",
    "ok",
    "truth_value",
    "post_mean",
    "post_median",
    "post_sd",
    "ci_lower",
    "ci_upper",
    "ci_length",
    "covered",
    "error",
    "efficient_variance",
    "estimator",
    "ks_efficient",
    "ks_centered",
    "rescaled_variance",
    "message",
];

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<Row>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_table(cells: &[Cell], path: &Path) -> Result<()> {
    let mut buf = format!("{TABLE_SCHEMA}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record([
            "truth",
            "horizon",
            "functional",
            "successes",
            "failures",
            "coverage",
            "mean_length",
            "median_length",
            "rmse",
            "error_sd",
            "median_ks",
            "valid",
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
        for c in cells {
            w.serialize(c).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Vec<Cell>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<Cell>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes tables, rows, histograms, surfaces and a gnuplot script under
/// `dir`. Returns the paths written.
pub fn emit_outputs(report: &ExperimentReport, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let table = dir.join("table1.csv");
    write_table(&report.cells, &table)?;
    written.push(table);
    let rows = dir.join("rows.csv");
    write_rows(&report.rows, &rows)?;
    written.push(rows);

    let hist_dir = dir.join("histograms");
    create_dir(&hist_dir)?;
    for ((id, t, f), samples) in &report.histograms {
        let v = report
            .rows
            .iter()
            .find(|r| r.truth == *id && format_horizon(r.horizon) == *t && r.functional == *f)
            .and_then(|r| r.efficient_variance)
            .unwrap_or(0.0);
        let path = hist_dir.join(format!("{id}_T{t}_{}.csv", slug(f)));
        write_histogram(samples, v, config.histogram_bins, &path)?;
        written.push(path);
    }

    let surf_dir = dir.join("surfaces");
    create_dir(&surf_dir)?;
    for &id in &config.truths {
        let path = surf_dir.join(format!("{id}_truth.csv"));
        let truth = GridFunction::sample(&GroundTruth::new(id), config.grid);
        let mean = truth.integrate();
        posterior::write_grid_csv(&truth.map(|v| v - mean), &path)?;
        written.push(path);
    }
    for ((id, t), field) in &report.surfaces {
        let path = surf_dir.join(format!("{id}_T{t}_mean.csv"));
        posterior::write_grid_csv(&field.to_grid(config.grid)?, &path)?;
        written.push(path);
    }

    let plot = dir.join("plot.gp");
    std::fs::write(&plot, gnuplot_script(report, config)).map_err(|e| Error::io(&plot, e))?;
    written.push(plot);
    Ok(written)
}

fn write_histogram(samples: &[f64], variance: f64, bins: usize, path: &Path) -> Result<()> {
    let mut out = String::from("# torus-bvm histogram v1\nleft,right,count,density,normal_density\n");
    if !samples.is_empty() {
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let n = samples.len() as f64;
        for (left, count) in stats::histogram(samples, lo, hi, bins) {
            let mid = left + 0.5 * width;
            let normal = if variance > 0.0 {
                (-(mid * mid) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
            } else {
                0.0
            };
            let _ = writeln!(out, "{left},{},{count},{},{normal}", left + width, count as f64 / (n * width));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn gnuplot_script(report: &ExperimentReport, config: &ExperimentConfig) -> String {
    let mut s = String::from(
        "# Run from the output directory: gnuplot plot.gp\n\
         set datafile separator ','\nset terminal pngcairo size 1200,400\n",
    );
    for &id in &config.truths {
        let _ = writeln!(
            s,
            "set output '{id}_surfaces.png'\nset multiplot layout 1,{} title '{id}'\nset view map\nunset key",
            1 + config.horizons.len()
        );
        let _ = writeln!(s, "splot 'surfaces/{id}_truth.csv' skip 2 using 1:2:3 with image");
        for t in &config.horizons {
            let t = format_horizon(*t);
            if report.surfaces.contains_key(&(id, t.clone())) {
                let _ = writeln!(s, "splot 'surfaces/{id}_T{t}_mean.csv' skip 2 using 1:2:3 with image");
            }
        }
        s.push_str("unset multiplot\n");
    }
    for (id, t, f) in report.histograms.keys() {
        let name = format!("{id}_T{t}_{}", slug(f));
        let _ = writeln!(
            s,
            "set output 'histograms/{name}.png'\nset key\nplot 'histograms/{name}.csv' skip 2 using (($1+$2)/2):4 with boxes title 'rescaled posterior', \
             '' skip 2 using (($1+$2)/2):5 with lines title 'N(0,V)'"
        );
    }
    s
}

/// Provenance record written next to the outputs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
