//! Command-line front end: run experiments, sweep parameters, evaluate
//! convergence bounds, spot-check the gradient decomposition, and generate
//! synthetic dataset pools.
//!
//! Exit codes: 0 success, 2 config/parse error, 3 numeric divergence,
//! 4 infeasible bound request, 1 anything else.

use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use sensefed::analysis::{lemma1_random_trial, AssumptionConstants, ConstSource, GradBound};
use sensefed::config::ExperimentConfig;
use sensefed::data::{generate_pool, write_pool_bin, write_pool_csv, DatasetSpec};
use sensefed::error::{Error, Result};
use sensefed::harness::{
    emit_bounds, run_experiment, run_sweep, write_result, ConstantsSource, SweepAxis,
};
use sensefed::rng::{StreamKey, StreamPurpose};

#[derive(Parser)]
#[command(
    name = "sensefed",
    about = "Federated learning simulator with per-round sample sensing and over-the-air aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and write result files.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the same config across an axis of values, several seeds each.
    Sweep {
        config: PathBuf,
        /// One of: gamma, sigma_z, eta, tau, schedule.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 5)]
        replications: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the convergence bound for a finished run directory.
    Bounds {
        result_dir: PathBuf,
        /// TOML file with provided constants (otherwise estimated from the
        /// trace).
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Randomized exactness check of the aggregated-gradient decomposition.
    CheckLemma1 {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset pool file from a TOML spec.
    GenData { spec: PathBuf },
}

/// Provided-constants file: scalar or per-round gradient bound.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    smoothness: f64,
    #[serde(default)]
    grad_variance: f64,
    #[serde(default = "one")]
    alpha_sq: f64,
    #[serde(default)]
    beta_sq: f64,
    #[serde(default)]
    grad_bound: f64,
    #[serde(default)]
    grad_bound_per_round: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn load_constants(path: &Path) -> Result<AssumptionConstants> {
    let text = std::fs::read_to_string(path)?;
    let file: ConstantsFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("constants file: {e}")))?;
    Ok(AssumptionConstants {
        smoothness: file.smoothness,
        grad_variance: file.grad_variance,
        grad_bound: match file.grad_bound_per_round {
            Some(v) => GradBound::PerRound(v),
            None => GradBound::Uniform(file.grad_bound),
        },
        alpha_sq: file.alpha_sq,
        beta_sq: file.beta_sq,
        source: ConstSource::Provided,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let out_dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| default_out_dir(&config));
            let result = run_experiment(cfg)?;
            write_result(&out_dir, &result)?;
            let last = result.trace.rounds.last();
            println!(
                "ran {} rounds ({}), final loss {}, wrote {}",
                result.trace.len(),
                result.trace.algorithm,
                last.map_or(f64::NAN, |r| r.loss),
                out_dir.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
            replications,
            out,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let sweep = run_sweep(&cfg, axis, &values, replications);
            let table = sweep.table_csv();
            let out_dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| default_out_dir(&config));
            std::fs::create_dir_all(&out_dir)?;
            let path = out_dir.join("sweep_summary.csv");
            std::fs::write(&path, &table)?;
            print!("{table}");
            println!("wrote {}", path.display());
            let failures = sweep.cells.iter().filter(|c| c.error.is_some()).count();
            if failures > 0 {
                eprintln!("{failures} sweep cell(s) failed; see table");
            }
            Ok(())
        }
        Command::Bounds {
            result_dir,
            constants,
        } => {
            let source = match constants {
                Some(path) => ConstantsSource::Provided(load_constants(&path)?),
                None => ConstantsSource::Estimated,
            };
            let report = emit_bounds(&result_dir, source)?;
            for (term, value) in &report.terms {
                println!("{term}: {value:.6e}");
            }
            match (report.total, report.measured_avg_grad_sq) {
                (Some(total), Some(measured)) => {
                    println!("total: {total:.6e}");
                    println!("measured_avg_grad_sq: {measured:.6e}");
                }
                _ => {}
            }
            if !report.feasible {
                return Err(Error::InfeasibleBound(
                    "learning rate violates the bound's condition for this trace".into(),
                ));
            }
            Ok(())
        }
        Command::CheckLemma1 { trials, seed } => {
            let mut worst_ratio: f64 = 0.0;
            let mut failures = 0u64;
            for i in 0..trials {
                let trial = lemma1_random_trial(seed.wrapping_add(i))?;
                let tol = 1e-10 * (1.0 + trial.lhs_scale);
                worst_ratio = worst_ratio.max(trial.residual / tol);
                if !trial.passes() {
                    failures += 1;
                }
            }
            println!(
                "{trials} trials, worst residual/tolerance ratio {worst_ratio:.3e}, {failures} failures"
            );
            if failures > 0 {
                return Err(Error::Data(format!(
                    "{failures} decomposition checks exceeded tolerance"
                )));
            }
            println!("PASS");
            Ok(())
        }
        Command::GenData { spec } => {
            let text = std::fs::read_to_string(&spec)?;
            let spec = DatasetSpec::from_toml_str(&text)?;
            let generator = spec.generator()?;
            let key = StreamKey::new(spec.seed);
            let pool = generate_pool(
                &generator,
                spec.samples,
                spec.feature_dim,
                &mut key.stream(StreamPurpose::PoolTrain, 0, 0),
            )?;
            if spec.output.extension().is_some_and(|e| e == "bin") {
                write_pool_bin(&spec.output, &pool)?;
            } else {
                write_pool_csv(&spec.output, &pool)?;
            }
            println!(
                "wrote {} samples x {} features to {}",
                pool.len(),
                pool.feature_dim(),
                spec.output.display()
            );
            Ok(())
        }
    }
}

fn default_out_dir(config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from("results").join(stem)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
