//! Command-line front end: dataset generation, experiment runs, the oracle
//! battery and parameter sweeps.

mod config;
mod generate;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use config::{
    parse_override, set_path, DatasetSource, EnvironmentSource, ExperimentConfig, ExperimentKind,
    OutputFormat, SignalingSettings, TemporalSettings,
};
pub use generate::{generate_dataset, GeneratorSpec};
pub use run::{failure_summary, run_experiment, run_verify, RunOutcome};

use crate::error::{config as config_err, Error, Result};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "emcom", version, about = "Generative emergent communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as JSON.
    Generate(GenerateArgs),
    /// Run one experiment file.
    Run(RunArgs),
    /// Run the exact-oracle battery.
    Verify {
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Run the cartesian product of `--vary` values over one experiment file.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long)]
    objects: usize,
    #[arg(long)]
    true_signs: usize,
    #[arg(long)]
    categories: usize,
    #[arg(long)]
    features: usize,
    #[arg(long, default_value_t = 5)]
    tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    config: PathBuf,
    /// `key.path=value`, applied after the file.
    #[arg(long = "set")]
    set: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    config: PathBuf,
    /// `key.path=v1,v2,...`
    #[arg(long = "vary", required = true)]
    vary: Vec<String>,
    #[arg(long = "set")]
    set: Vec<String>,
    #[arg(long, default_value = "sweep")]
    output_dir: PathBuf,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Property(_) => EXIT_PROPERTY,
        _ => EXIT_USAGE,
    }
}

/// Expands `--vary` axes into one override list per grid point, plus a
/// directory name for each.
pub fn sweep_points(vary: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    let mut points = vec![(String::new(), Vec::new())];
    for axis in vary {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| config_err(format!("--vary `{axis}` is not key=v1,v2")))?;
        let values: Vec<&str> = values.split(',').filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(config_err(format!("--vary `{axis}` has no values")));
        }
        points = points
            .into_iter()
            .flat_map(|(name, sets)| {
                values.iter().map(move |v| {
                    let label = format!("{key}={v}").replace(['/', ' '], "_");
                    let name = if name.is_empty() { label } else { format!("{name},{label}") };
                    let mut sets = sets.clone();
                    sets.push(format!("{key}={v}"));
                    (name, sets)
                })
            })
            .collect();
    }
    Ok(points)
}

fn report(outcome: &RunOutcome) -> i32 {
    for p in &outcome.artifacts {
        println!("wrote {}", p.display());
    }
    if outcome.property_failures > 0 {
        eprintln!("{} property checks failed", outcome.property_failures);
        EXIT_PROPERTY
    } else {
        EXIT_OK
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(a) => {
            let spec = GeneratorSpec {
                n_agents: a.agents,
                n_objects: a.objects,
                n_true_signs: a.true_signs,
                n_categories: a.categories,
                n_features: a.features,
                tokens: a.tokens,
                noise: a.noise,
                seed: a.seed,
            };
            spec.validate()?;
            let ds = generate_dataset(&spec)?;
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&a.out, ds.to_json()?)?;
            println!("wrote {}", a.out.display());
            Ok(EXIT_OK)
        }
        Command::Run(a) => {
            let mut sets = a.set;
            if let Some(dir) = a.output_dir {
                sets.push(format!("output_dir={}", toml::Value::String(dir.display().to_string())));
            }
            let cfg = ExperimentConfig::load(&a.config, &sets)?;
            Ok(report(&run_experiment(&cfg)?))
        }
        Command::Verify { output_dir } => {
            let cfg = ExperimentConfig {
                kind: ExperimentKind::Verify,
                seed: 0,
                output_dir,
                format: OutputFormat::default(),
                naming: None,
                dataset: None,
                signaling: None,
                marl: None,
                environment: None,
                temporal: None,
            };
            Ok(report(&run_verify(&cfg)?))
        }
        Command::Sweep(a) => {
            let points = sweep_points(&a.vary)?;
            let configs = points
                .into_iter()
                .map(|(name, mut sets)| {
                    let mut all = a.set.clone();
                    all.append(&mut sets);
                    let dir = a.output_dir.join(name);
                    all.push(format!("output_dir={}", toml::Value::String(dir.display().to_string())));
                    ExperimentConfig::load(&a.config, &all)
                })
                .collect::<Result<Vec<_>>>()?;
            let outcomes = configs
                .par_iter()
                .map(run_experiment)
                .collect::<Result<Vec<_>>>()?;
            Ok(outcomes.iter().map(report).max().unwrap_or(EXIT_OK))
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
