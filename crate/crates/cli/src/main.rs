//! `torus-bvm`: simulate, infer and run coverage studies from the shell.
//!
//! Exit codes: 0 success, 1 runtime failure (or an invalid experiment cell),
//! 2 usage error.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use torus_bvm::basis::RealBasis;
use torus_bvm::experiments::{self, ExperimentConfig, RunManifest};
use torus_bvm::field::{FourierField, GridFunction};
use torus_bvm::functionals::{self, FunctionalSpec};
use torus_bvm::pde::{self, EllipticOperator};
use torus_bvm::posterior::{self, GaussianPosterior};
use torus_bvm::priors::{MaternPrior, VarianceConvention};
use torus_bvm::sde::{self, FlatPotential, GroundTruth, Trajectory, TruthId};
use torus_bvm::stats;
use torus_bvm::{Error, Result};

#[derive(Parser)]
#[command(name = "torus-bvm", version, about = "Bayesian inference for reversible diffusions on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark diffusion and write its trajectory.
    Simulate {
        #[arg(long)]
        truth: TruthId,
        #[arg(long = "T", value_parser = positive)]
        horizon: f64,
        #[arg(long, value_parser = positive)]
        dt: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Initial point as `x1,x2`.
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 1.0])]
        x0: Vec<f64>,
    },
    /// Conjugate posterior for the potential: mean surface and variances.
    Posterior {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        prior: PriorArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Lattice resolution of the mean surface.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Plug-in posterior samples of one functional.
    Functionals {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        prior: PriorArgs,
        /// Functional as JSON, e.g. '{"kind":"power_B","q":2}'.
        #[arg(long)]
        functional: String,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Efficient variance of a functional at a known potential, as JSON.
    Efficiency {
        /// Benchmark potential, or `flat` for the uniform measure.
        #[arg(long, conflicts_with = "field", required_unless_present = "field")]
        truth: Option<String>,
        /// Potential given as a Fourier-field CSV.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        functional: String,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value_t = 6)]
        representor_cutoff: usize,
        #[arg(long, default_value_t = 8)]
        galerkin_cutoff: usize,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full coverage study from a TOML config.
    Experiment {
        /// Config file; may start from `preset = "desk"` or `"paper"`.
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Run a named preset without a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the analytic and oracle self-checks.
    Validate,
}

#[derive(clap::Args)]
struct PriorArgs {
    /// Fourier cutoff K; defaults follow the desk preset.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    smoothness: Option<f64>,
    #[arg(long, value_enum)]
    convention: Option<Convention>,
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Sobolev,
    Printed,
}

impl PriorArgs {
    fn prior(&self, dim: usize, horizon: f64) -> MaternPrior {
        let desk = ExperimentConfig::desk().prior;
        let convention = match self.convention {
            Some(Convention::Sobolev) => VarianceConvention::Sobolev,
            Some(Convention::Printed) => VarianceConvention::Printed,
            None => desk.convention,
        };
        MaternPrior::new(
            dim,
            self.smoothness.unwrap_or(desk.smoothness),
            self.cutoff.unwrap_or(desk.cutoff),
            horizon,
        )
        .with_convention(convention)
        .with_amplitude(self.amplitude.unwrap_or(desk.amplitude))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { truth, horizon, dt, seed, out, x0 } => simulate(truth, horizon, dt, seed, &out, &x0),
        Command::Posterior { trajectory, prior, out, grid } => posterior(&trajectory, &prior, &out, grid),
        Command::Functionals { trajectory, prior, functional, samples, seed, grid, out } => {
            functional_samples(&trajectory, &prior, &functional, samples, seed, grid, &out)
        }
        Command::Efficiency { truth, field, functional, grid, representor_cutoff, galerkin_cutoff, out } => {
            let res = pde::Resolution { grid, representor_cutoff, galerkin_cutoff };
            efficiency(truth.as_deref(), field.as_deref(), &functional, res, out.as_deref())
        }
        Command::Experiment { config, preset, out } => experiment(config.as_deref(), preset.as_deref(), &out),
        Command::Validate => validate(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn simulate(truth: TruthId, horizon: f64, dt: f64, seed: u64, out: &Path, x0: &[f64]) -> Result<ExitCode> {
    let traj = sde::simulate(&GroundTruth::new(truth), x0, horizon, dt, seed)?;
    traj.write_csv(out)?;
    eprintln!("wrote {} steps to {}", traj.steps(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn fit(trajectory: &Path, args: &PriorArgs) -> Result<(RealBasis, GaussianPosterior)> {
    let traj = Trajectory::read_csv(trajectory, None)?;
    let prior = args.prior(traj.dim(), traj.horizon());
    prior.validate()?;
    let basis = prior.basis();
    let (sigma, h) = posterior::sufficient_statistics(&traj, &basis)?;
    let post = posterior::conjugate_posterior(&sigma, &h, &prior.variances())?;
    Ok((basis, post))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })
}

fn posterior(trajectory: &Path, args: &PriorArgs, out: &Path, grid: usize) -> Result<ExitCode> {
    let (basis, post) = fit(trajectory, args)?;
    create_dir(out)?;
    post.write_mean_grid(&basis, grid, &out.join("posterior_mean_grid.csv"))?;
    post.write_variances(&basis, &out.join("posterior_variances.csv"))?;
    post.mean_field(&basis).write_csv(&out.join("posterior_mean_field.csv"))?;
    eprintln!("wrote posterior summaries to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_functional(text: &str) -> Result<FunctionalSpec> {
    let spec: FunctionalSpec =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("functional `{text}`: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn functional_samples(
    trajectory: &Path,
    args: &PriorArgs,
    functional: &str,
    samples: usize,
    seed: u64,
    grid: usize,
    out: &Path,
) -> Result<ExitCode> {
    let spec = parse_functional(functional)?;
    let (basis, post) = fit(trajectory, args)?;
    let draws = basis.grid_matrix(grid)? * post.sample_coords(seed, samples);
    let mut text = format!("# torus-bvm functional-samples v1 {}\nsample,value\n", spec.label());
    for (i, col) in draws.column_iter().enumerate() {
        let g = GridFunction::new(basis.dim(), grid, col.iter().copied().collect())?;
        text.push_str(&format!("{i},{}\n", functionals::evaluate_grid(&spec, &g)?));
    }
    std::fs::write(out, text).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    eprintln!("wrote {samples} samples of {} to {}", spec.label(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn efficiency(
    truth: Option<&str>,
    field: Option<&Path>,
    functional: &str,
    res: pde::Resolution,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let spec = parse_functional(functional)?;
    let raw = match (truth, field) {
        (Some("flat"), _) => GridFunction::sample(&FlatPotential(2), res.grid),
        (Some(name), _) => GridFunction::sample(&sde::ground_truth(name)?, res.grid),
        (None, Some(path)) => FourierField::read_csv(path)?.to_grid(res.grid)?,
        (None, None) => return Err(Error::Input("need --truth or --field".into())),
    };
    let mean = raw.integrate();
    let b0 = raw.map(|v| v - mean);
    let report = pde::efficient_variance(&b0, &spec, res)?;
    let json = serde_json::to_string_pretty(&report.to_json(Some(&spec)))
        .map_err(|e| Error::Config(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(config: Option<&Path>, preset: Option<&str>, out: &Path) -> Result<ExitCode> {
    let config = match (config, preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("need --config or --preset".into())),
    };
    let started = experiments::unix_now();
    let report = experiments::run_experiment(&config, true)?;
    let written = experiments::emit_outputs(&report, &config, out)?;
    let manifest = RunManifest {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: experiments::unix_now(),
        seed: config.seed,
        outputs: written
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
            .collect(),
        config,
    };
    manifest.write(&out.join("manifest.json"))?;
    for cell in &report.cells {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "{} T={} {:<14} coverage {} length {} rmse {}{}",
            cell.truth,
            cell.horizon,
            cell.functional,
            fmt(cell.coverage),
            fmt(cell.mean_length),
            fmt(cell.rmse),
            if cell.valid { "" } else { "  INVALID" }
        );
    }
    if report.any_invalid() {
        eprintln!("some cells had more than 10% failed replications");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

/// Named oracle check with its observed error.
struct Check {
    name: &'static str,
    error: f64,
    tolerance: f64,
}

fn validate() -> Result<ExitCode> {
    let mut checks = Vec::new();

    let flat = GridFunction::from_fn(2, 16, |_| 1.0);
    let psi = FourierField::cos_mode(2, 1, &[1, 0]);
    let v = EllipticOperator::assemble(&flat, 2)?.solve(&psi)?.variance;
    let want = 1.0 / (4.0 * PI * PI);
    checks.push(Check { name: "Laplacian inverse V = 1/(4 pi^2)", error: (v - want).abs() / want, tolerance: 1e-8 });

    let half_cos = GridFunction::from_fn(1, 64, |x| 0.5 * (2.0 * PI * x[0]).cos());
    let mu0 = functionals::InvariantMeasure::from_grid(&half_cos).density().values()[0];
    // e / I_0(1)
    let bessel = std::f64::consts::E / 1.266_065_877_752_008_4;
    checks.push(Check { name: "invariant density against Bessel oracle", error: (mu0 - bessel).abs(), tolerance: 1e-8 });

    let sigma = nalgebra::DMatrix::from_element(1, 1, 3.5);
    let h = nalgebra::DVector::from_element(1, -1.25);
    let post = posterior::conjugate_posterior(&sigma, &h, &[0.4])?;
    checks.push(Check {
        name: "scalar conjugacy",
        error: (post.mean()[0] + 1.25 / 6.0).abs().max((post.variances()[0] - 1.0 / 6.0).abs()),
        tolerance: 1e-12,
    });

    let basis = RealBasis::new(2, 2);
    let b0 = basis.to_field(&(0..basis.len()).map(|j| 0.3 / (1.0 + j as f64)).collect::<Vec<_>>());
    let dir = basis.to_field(&(0..basis.len()).map(|j| if j % 2 == 0 { 0.2 } else { -0.1 }).collect::<Vec<_>>());
    let (g0, gh) = (b0.to_grid(32)?, dir.to_grid(32)?);
    for spec in [FunctionalSpec::PowerB { q: 4 }, FunctionalSpec::EntropyMu, FunctionalSpec::SqrtMu] {
        let exact = functionals::representor_grid(&spec, &g0)?.inner(&gh);
        let eps = 1e-4;
        let plus = g0.zip_with(&gh, |a, b| a + eps * b);
        let minus = g0.zip_with(&gh, |a, b| a - eps * b);
        let fd = (functionals::evaluate_grid(&spec, &plus)? - functionals::evaluate_grid(&spec, &minus)?) / (2.0 * eps);
        checks.push(Check { name: "directional derivative matches representor", error: (fd - exact).abs(), tolerance: 1e-6 });
    }

    let mu = functionals::invariant_measure(&b0, 32)?;
    checks.push(Check { name: "invariant density integrates to one", error: (mu.density().integrate() - 1.0).abs(), tolerance: 1e-10 });

    let prior = MaternPrior::new(1, 1.0, 1, 1.0);
    let line = prior.basis();
    let draws = (0..2000)
        .map(|i| Ok(line.coordinates(&prior.sample(i))?[0]))
        .collect::<Result<Vec<f64>>>()?;
    let want = prior.variances()[0];
    let var = stats::sample_variance(&draws);
    checks.push(Check { name: "Matern coefficient variance", error: (var - want).abs() / want, tolerance: 0.1 });

    let mut ok = true;
    for c in &checks {
        let pass = c.error <= c.tolerance;
        ok &= pass;
        println!("[{}] {}: error {:.2e} (tolerance {:.0e})", if pass { "PASS" } else { "FAIL" }, c.name, c.error, c.tolerance);
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn positive_rejects_zero_and_nan() {
        assert!(positive("0").is_err());
        assert!(positive("-1e-3").is_err());
        assert!(positive("nan").is_err());
        assert_eq!(positive("1e-3"), Ok(1e-3));
    }
}
