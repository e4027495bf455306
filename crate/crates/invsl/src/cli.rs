//! Experiment runner: synthesize spectra, perturb them with seeded noise,
//! run reconstructions, verify the Wronskian identities, and export traces.
//!
//! All outputs are deterministic for a fixed configuration and seed, and
//! every file embeds the effective configuration that produced it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::forward::{self, BoundaryTriple, ForwardError, Spectrum};
use crate::functional::{
    self, FunctionalError, SpectralIndex, TargetSpectra, WeightScheme,
};
use crate::grid::{GridError, GridFunction};
use crate::optimizer::{self, OptimizerConfig, OptimizerMode};
use crate::wronskian;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unrecognized potential {0:?}; expected zero | const:<v> | cos2pi | bump | step, optionally with a +<offset> suffix, or @file.json")]
    BadPotential(String),
    #[error("{0}")]
    BadArguments(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

// ---------------------------------------------------------------------------
// Potentials

/// Resolve a potential specification to a grid function.
///
/// Named forms: `zero`, `const:<v>`, `cos2pi` (cos 2πx), `bump` (Gaussian at
/// x = 1/2), `step` (jump at x = 1/2). A trailing `+<offset>` adds a
/// constant, e.g. `cos2pi+3`. `@path.json` loads a serialized GridFunction
/// (resampled onto `n_intervals` via its spline if resolutions differ).
pub fn parse_potential(spec: &str, n_intervals: usize) -> Result<GridFunction, CliError> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = fs::read_to_string(path)?;
        let f: GridFunction = serde_json::from_str(&text)?;
        if f.n_intervals() == n_intervals {
            return Ok(f);
        }
        return Ok(GridFunction::sample(n_intervals, |x| {
            f.eval(x).expect("x in domain")
        })?);
    }
    let (base, offset) = split_offset(spec);
    let f: Box<dyn Fn(f64) -> f64> = if base == "zero" {
        Box::new(|_| 0.0)
    } else if base == "cos2pi" {
        Box::new(|x| (2.0 * PI * x).cos())
    } else if base == "bump" {
        Box::new(|x| (-(x - 0.5) * (x - 0.5) / 0.02).exp())
    } else if base == "step" {
        Box::new(|x| if x < 0.5 { 0.0 } else { 1.0 })
    } else if let Some(v) = base.strip_prefix("const:") {
        let c: f64 = v
            .parse()
            .map_err(|_| CliError::BadPotential(spec.to_string()))?;
        Box::new(move |_| c)
    } else {
        return Err(CliError::BadPotential(spec.to_string()));
    };
    Ok(GridFunction::sample(n_intervals, |x| f(x) + offset)?)
}

/// Split a trailing `+<number>` off a potential spec, if present.
fn split_offset(spec: &str) -> (&str, f64) {
    if let Some(pos) = spec.rfind('+') {
        if pos > 0 {
            if let Ok(v) = spec[pos + 1..].parse::<f64>() {
                return (&spec[..pos], v);
            }
        }
    }
    (spec, 0.0)
}

// ---------------------------------------------------------------------------
// Spectra files

/// On-disk spectra format: explicit (i, n, λ) triples plus the boundary
/// angles and free-form provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectraFile {
    pub bc: BoundaryTriple,
    pub entries: Vec<SpectrumEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub i: u8,
    pub n: u32,
    pub lambda: f64,
}

impl SpectraFile {
    pub fn to_targets(&self) -> Result<TargetSpectra, CliError> {
        let mut entries = BTreeMap::new();
        for e in &self.entries {
            let spectrum = Spectrum::try_from(e.i)
                .map_err(CliError::BadArguments)?;
            entries.insert(SpectralIndex::new(spectrum, e.n), e.lambda);
        }
        Ok(TargetSpectra::new(self.bc, entries)?)
    }

    pub fn from_targets(targets: &TargetSpectra, provenance: serde_json::Value) -> Self {
        SpectraFile {
            bc: *targets.bc(),
            entries: targets
                .entries()
                .iter()
                .map(|(idx, &lambda)| SpectrumEntry {
                    i: idx.spectrum.index(),
                    n: idx.n,
                    lambda,
                })
                .collect(),
            provenance: Some(provenance),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Split an ascending list of eigenvalues alternately between the two
/// spectra, lowest value to spectrum 2 — the ordering the default angles
/// (α = β = 0, γ = π/2) produce, where the mixed-condition spectrum lies
/// below the Dirichlet one.
pub fn interlaced_entries(values: &[f64]) -> Vec<SpectrumEntry> {
    values
        .iter()
        .enumerate()
        .map(|(k, &lambda)| SpectrumEntry {
            i: if k % 2 == 0 { 2 } else { 1 },
            n: (k / 2) as u32,
            lambda,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "invsl",
    about = "Inverse Sturm-Liouville reconstruction from two spectra"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    Uniform,
    Invsq,
}

impl WeightArg {
    fn scheme(self) -> WeightScheme {
        match self {
            WeightArg::Uniform => WeightScheme::Uniform,
            WeightArg::Invsq => WeightScheme::InverseSquareN,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Prcg,
    Sd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FunctionalArg {
    G,
    Gtilde,
}

#[derive(Debug, Args)]
pub struct BcArgs {
    /// Left boundary angle (radians), shared by both spectra.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Right boundary angle of the first spectrum.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Right boundary angle of the second spectrum.
    #[arg(long, default_value_t = PI / 2.0)]
    pub gamma: f64,
}

impl BcArgs {
    fn triple(&self) -> Result<BoundaryTriple, CliError> {
        Ok(BoundaryTriple::new(self.alpha, self.beta, self.gamma)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the forward problem and print eigenvalues as i,n,lambda CSV.
    Forward {
        #[arg(long, default_value = "zero")]
        potential: String,
        #[arg(long, default_value_t = 30)]
        pairs: u32,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[command(flatten)]
        bc: BcArgs,
    },
    /// Synthesize a target spectra file from a known potential.
    Synth {
        #[arg(long)]
        potential: String,
        #[arg(long, default_value_t = 30)]
        pairs: u32,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[command(flatten)]
        bc: BcArgs,
        /// Output spectra JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Add seeded uniform noise on [-r, r] to every eigenvalue of a file.
    Perturb {
        /// Input spectra JSON.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "noise-r", default_value_t = 0.0)]
        noise_r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a potential from a spectra file.
    Recover {
        /// Input spectra JSON.
        #[arg(long)]
        spectra: PathBuf,
        /// Initial potential.
        #[arg(long, default_value = "zero")]
        q0: String,
        /// The true potential, when known, for the delta2 diagnostic.
        #[arg(long)]
        known_potential: Option<String>,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = WeightArg::Uniform)]
        weights: WeightArg,
        #[arg(long = "max-iter", default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-18)]
        gtol: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Prcg)]
        mode: ModeArg,
        #[arg(long = "restart-period", default_value_t = 20)]
        restart_period: usize,
        #[arg(long, value_enum, default_value_t = FunctionalArg::G)]
        functional: FunctionalArg,
        /// Mean of the true potential; required by the gtilde functional.
        #[arg(long = "mean-q")]
        mean_q: Option<f64>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Verify the Wronskian identities and the independence probe.
    Verify {
        #[arg(long, default_value = "zero")]
        potential: String,
        #[arg(long = "n-max", default_value_t = 8)]
        n_max: u32,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[command(flatten)]
        bc: BcArgs,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

/// Run a parsed command; the Ok value is the process exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Forward {
            potential,
            pairs,
            grid,
            bc,
        } => {
            let q = parse_potential(potential, *grid)?;
            let bc = bc.triple()?;
            print!("{}", forward_csv(&q, &bc, *pairs)?);
            Ok(0)
        }
        Command::Synth {
            potential,
            pairs,
            grid,
            bc,
            out,
        } => {
            let q = parse_potential(potential, *grid)?;
            let bc = bc.triple()?;
            let targets = TargetSpectra::synthesize(&q, &bc, *pairs)?;
            let provenance = json!({
                "command": "synth",
                "potential": potential,
                "pairs": pairs,
                "grid": grid,
                "bc": {"alpha": bc.alpha, "beta": bc.beta, "gamma": bc.gamma},
                "solver": {
                    "ode_rtol": forward::ODE_RTOL,
                    "ode_atol": forward::ODE_ATOL,
                    "lambda_tol": forward::LAMBDA_TOL,
                },
            });
            SpectraFile::from_targets(&targets, provenance).save(out)?;
            Ok(0)
        }
        Command::Perturb {
            input,
            noise_r,
            seed,
            out,
        } => {
            let mut file = SpectraFile::load(input)?;
            if *noise_r < 0.0 {
                return Err(CliError::BadArguments(format!(
                    "noise radius must be nonnegative, got {noise_r}"
                )));
            }
            if *noise_r > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                for e in &mut file.entries {
                    e.lambda += rng.gen_range(-*noise_r..=*noise_r);
                }
            }
            file.provenance = Some(json!({
                "command": "perturb",
                "noise_r": noise_r,
                "seed": seed,
                "parent": file.provenance,
            }));
            file.save(out)?;
            Ok(0)
        }
        Command::Recover {
            spectra,
            q0,
            known_potential,
            grid,
            weights,
            max_iter,
            gtol,
            mode,
            restart_period,
            functional,
            mean_q,
            out_dir,
        } => {
            let file = SpectraFile::load(spectra)?;
            let targets = file.to_targets()?;
            let report_cfg = json!({
                "command": "recover",
                "spectra": spectra,
                "q0": q0,
                "known_potential": known_potential,
                "grid": grid,
                "weights": format!("{weights:?}"),
                "max_iter": max_iter,
                "gtol": gtol,
                "mode": format!("{mode:?}"),
                "restart_period": restart_period,
                "functional": format!("{functional:?}"),
                "mean_q": mean_q,
            });
            let q0 = parse_potential(q0, *grid)?;
            let known = known_potential
                .as_deref()
                .map(|s| parse_potential(s, *grid))
                .transpose()?;
            let interlacing = functional::validate_interlacing(&targets);
            if !interlacing.holds {
                eprintln!(
                    "warning: target eigenvalues do not interlace (violations at n = {:?})",
                    interlacing.violations
                );
            }
            let mean_q_target = match functional {
                FunctionalArg::G => None,
                FunctionalArg::Gtilde => Some(mean_q.ok_or_else(|| {
                    CliError::BadArguments(
                        "--functional gtilde requires --mean-q".to_string(),
                    )
                })?),
            };
            let config = OptimizerConfig {
                max_iterations: *max_iter,
                g_tolerance: *gtol,
                mode: match mode {
                    ModeArg::Prcg => OptimizerMode::Prcg,
                    ModeArg::Sd => OptimizerMode::SteepestDescent,
                },
                restart_period: *restart_period,
                line_search_tolerance: 1e-3,
                mean_q_target,
            };
            let report = optimizer::minimize(
                &q0,
                &targets,
                &weights.scheme(),
                &config,
                known.as_ref(),
            )?;
            fs::create_dir_all(out_dir)?;
            fs::write(out_dir.join("trace.csv"), report.trace_csv())?;
            fs::write(out_dir.join("final_q.csv"), report.final_q.to_csv())?;
            fs::write(
                out_dir.join("final_q.json"),
                serde_json::to_string_pretty(&report.final_q)?,
            )?;
            let last = report.trace.last().expect("trace nonempty");
            let summary = json!({
                "config": report_cfg,
                "interlacing": interlacing,
                "iterations": last.iteration,
                "final_g": last.g_value,
                "initial_g": report.trace[0].g_value,
                "delta2": last.delta2,
                "delta_lambda": last.delta_lambda,
                "mean_q": report.final_q.mean(),
                "converged": report.converged,
                "termination_reason": report.termination_reason,
            });
            fs::write(
                out_dir.join("summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            Ok(0)
        }
        Command::Verify {
            potential,
            n_max,
            grid,
            tolerance,
            bc,
            out_dir,
        } => {
            let q = parse_potential(potential, *grid)?;
            let bc = bc.triple()?;
            let results = wronskian::verify_lemma(&q, &bc, *n_max)?;
            let probe = wronskian::independence_probe(&q, &bc, (*n_max).max(2))?;
            fs::create_dir_all(out_dir)?;
            fs::write(out_dir.join("lemma.csv"), wronskian::results_to_csv(&results))?;
            let worst = results
                .iter()
                .map(|r| r.abs_error)
                .fold(0.0_f64, f64::max);
            let passed = worst < *tolerance && probe.smallest_eigenvalue > 0.0;
            let summary = json!({
                "config": {
                    "command": "verify",
                    "potential": potential,
                    "n_max": n_max,
                    "grid": grid,
                    "tolerance": tolerance,
                    "bc": {"alpha": bc.alpha, "beta": bc.beta, "gamma": bc.gamma},
                },
                "rows": results.len(),
                "worst_abs_error": worst,
                "independence": probe,
                "passed": passed,
            });
            fs::write(
                out_dir.join("summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            Ok(if passed { 0 } else { 1 })
        }
    }
}

fn forward_csv(q: &GridFunction, bc: &BoundaryTriple, pairs: u32) -> Result<String, CliError> {
    let mut out = String::from("i,n,lambda\n");
    for spectrum in Spectrum::BOTH {
        for n in 0..pairs {
            let lambda = forward::eigenvalue(q, bc, spectrum, n)?;
            out.push_str(&format!("{},{},{:.12e}\n", spectrum.index(), n, lambda));
        }
    }
    Ok(out)
}
