//! `qnd-sim` command-line driver.

mod config;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use qnd_sim::atomic::{build_manifold, LevelLabel};
use qnd_sim::dynamics::GateDrive;
use qnd_sim::montecarlo::{run_sweep, write_outputs};
use qnd_sim::protocol::{parse_angle, plan_bisection, PlannerOptions, SettingsGrid};
use qnd_sim::validation::{run_validation, ValidationOptions};
use qnd_sim::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{aborts} of {trials} trials aborted (limit {limit})")]
    AbortThreshold { aborts: usize, trials: usize, limit: f64 },
    #[error("{failed} validation check(s) failed")]
    Validation { failed: usize },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Runtime(_) | Self::Validation { .. } => 1,
            Self::Config(_) => 2,
            Self::AbortThreshold { .. } => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::FockTruncation { .. } | Error::IntegratorTolerance { .. } | Error::ImpossibleBranch { .. } => {
                Self::Runtime(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "qnd-sim", version, about = "Quantum-logic subspace measurement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep described by a TOML config.
    Simulate {
        config: PathBuf,
        /// CSV path; overrides `run.output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Trials per row; overrides `run.trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the built-in oracle checks.
    Validate {
        /// Motional Fock cutoff used by the gate checks.
        #[arg(long, default_value_t = GateDrive::default().fock_cutoff)]
        fock_cutoff: usize,
        /// Scales the solved gate detuning (for testing the closure check).
        #[arg(long, default_value_t = 1.0)]
        detuning_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search for a bisection tree and print it as JSON.
    Plan {
        #[arg(long, default_value = "yb171")]
        ion: String,
        #[arg(long, default_value_t = 0.0)]
        field_gauss: f64,
        /// Candidate dθ values, e.g. `pi,pi/2,pi/4`.
        #[arg(long, value_delimiter = ',', default_value = "pi,pi/2,pi/4")]
        dtheta: Vec<String>,
        /// Candidate φ_y values.
        #[arg(long, value_delimiter = ',', default_value = "0,pi/2")]
        phi: Vec<String>,
        /// Levels to identify, e.g. `1,0;0,0`; default is the whole manifold.
        #[arg(long)]
        subspace: Option<String>,
        #[arg(long, default_value_t = PlannerOptions::default().tolerance)]
        tolerance: f64,
        #[arg(long, default_value_t = PlannerOptions::default().max_pulses)]
        max_pulses: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the dressed ground-state levels as JSON.
    DumpManifold {
        #[arg(long, default_value = "yb171")]
        ion: String,
        #[arg(long, default_value_t = 0.0)]
        field_gauss: f64,
    },
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("QND_SIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("QND_SIM_THREADS must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn simulate(config: PathBuf, output: Option<PathBuf>, trials: Option<usize>) -> Result<(), CliError> {
    let mut run = config::load_config(&config)?;
    if let Some(n) = trials {
        if n == 0 {
            return Err(CliError::Config("--trials must be at least 1".into()));
        }
        run.sweep.trials = n;
    }
    if let Some(t) = threads_from_env()? {
        run.sweep.threads = t;
    }
    let csv = output
        .or(run.output.clone())
        .unwrap_or_else(|| config.with_extension("csv"));
    log::info!("{} rows x {} trials -> {}", run.sweep.rows().len(), run.sweep.trials, csv.display());
    let result = run_sweep(&run.sweep)?;
    let meta = write_outputs(&run.sweep, &result, &csv)?;
    println!("wrote {} and {}", csv.display(), meta.display());
    let (aborts, trials) = (result.total_aborts(), result.total_trials());
    if aborts as f64 > run.max_abort_fraction * trials as f64 {
        return Err(CliError::AbortThreshold {
            aborts,
            trials,
            limit: run.max_abort_fraction,
        });
    }
    Ok(())
}

fn validate(fock_cutoff: usize, detuning_scale: f64, seed: u64) -> Result<(), CliError> {
    let options = ValidationOptions {
        drive: GateDrive {
            fock_cutoff,
            ..GateDrive::default()
        },
        detuning_scale,
        seed,
    };
    let results = run_validation(&options);
    for c in &results {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match results.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        failed => Err(CliError::Validation { failed }),
    }
}

fn parse_angles(list: &[String]) -> Result<Vec<f64>, CliError> {
    list.iter()
        .map(|s| parse_angle(s.trim()).map_err(CliError::from))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn plan(
    ion: &str,
    field_gauss: f64,
    dtheta: &[String],
    phi: &[String],
    subspace: Option<&str>,
    tolerance: f64,
    max_pulses: usize,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let manifold = build_manifold(&config::preset_ion(ion, field_gauss)?)?;
    let subspace: BTreeSet<LevelLabel> = match subspace {
        Some(text) => text
            .split(';')
            .map(|s| s.trim().parse::<LevelLabel>())
            .collect::<Result<_, _>>()?,
        None => manifold.labels().into_iter().collect(),
    };
    let grid = SettingsGrid::new(parse_angles(dtheta)?, parse_angles(phi)?);
    let tree = plan_bisection(&manifold, &subspace, &grid, PlannerOptions { tolerance, max_pulses })?;
    let text = tree.to_json_string() + "\n";
    match output {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    }
    Ok(())
}

fn dump_manifold(ion: &str, field_gauss: f64) -> Result<(), CliError> {
    let spec = config::preset_ion(ion, field_gauss)?;
    let manifold = build_manifold(&spec)?;
    let levels: Vec<_> = manifold
        .levels
        .iter()
        .map(|l| {
            json!({
                "F": l.label.f.value(),
                "mF": l.label.m_f.value(),
                "energy_rad_s": l.energy,
                "b": l.b_coeff,
            })
        })
        .collect();
    let doc = json!({
        "ion": {
            "preset": ion,
            "nuclear_spin": spec.nuclear_spin.value(),
            "hyperfine_constant_rad_s": spec.hyperfine_constant,
            "lande_gj": spec.lande_gj,
            "field_tesla": spec.quantization_field,
        },
        "levels": levels,
    });
    println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, output, trials } => simulate(config, output, trials),
        Command::Validate {
            fock_cutoff,
            detuning_scale,
            seed,
        } => validate(fock_cutoff, detuning_scale, seed),
        Command::Plan {
            ion,
            field_gauss,
            dtheta,
            phi,
            subspace,
            tolerance,
            max_pulses,
            output,
        } => plan(&ion, field_gauss, &dtheta, &phi, subspace.as_deref(), tolerance, max_pulses, output),
        Command::DumpManifold { ion, field_gauss } => dump_manifold(&ion, field_gauss),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
