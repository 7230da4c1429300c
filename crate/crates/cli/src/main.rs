//! `mfldp` command-line front end.

mod commands;
mod emit;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use mfldp::model::{builtin_model, model_from_json, model_to_json, ModelSpec, SimplexPoint};
use mfldp::rates::JumpRateTable;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] mfldp::Error),
    #[error("i/o: {0}")]
    Io(String),
    /// A check failed under `--strict`; the report was still written.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfldp", version, about = "Large deviations for mean-field interacting particle systems")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "MFLDP_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory of the empirical measure.
    Simulate(commands::SimulateArgs),
    /// Integrate the law-of-large-numbers ODE.
    Lln(commands::LlnArgs),
    /// Evaluate the local rate function L(x, β).
    Rate(commands::RateArgs),
    /// Action of a piecewise-linear path read from CSV.
    Action(commands::ActionArgs),
    /// Minimum action between two points at a fixed horizon.
    Minimize(commands::MinimizeArgs),
    /// Quasipotential between two points.
    Quasipotential(commands::QuasipotentialArgs),
    /// Structural assumption checks.
    Check(commands::CheckArgs),
    /// Run a validation experiment.
    Validate(validate::ValidateArgs),
}

/// Where the model comes from: a built-in with parameters or a JSON file.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Built-in model (`curie-weiss`, `arn`, `eg3`).
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    pub model: Option<String>,

    /// JSON model file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Built-in parameter, `name=value` (repeatable).
    #[arg(long = "param", value_name = "NAME=VALUE", requires = "model")]
    pub params: Vec<String>,
}

impl ModelArgs {
    pub fn load(&self) -> Result<ModelSpec, CliError> {
        match (&self.model, &self.config) {
            (Some(name), None) => {
                let mut params = BTreeMap::new();
                for p in &self.params {
                    let (k, v) = p
                        .split_once('=')
                        .ok_or_else(|| CliError::Usage(format!("--param `{p}` is not NAME=VALUE")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("--param `{p}` has a non-numeric value")))?;
                    params.insert(k.trim().to_string(), v);
                }
                Ok(builtin_model(name, &params)?)
            }
            (None, Some(path)) => {
                if !self.params.is_empty() {
                    return Err(CliError::Usage("--param only applies to --model".into()));
                }
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                Ok(model_from_json(&text)?)
            }
            _ => Err(CliError::Usage("give exactly one of --model or --config".into())),
        }
    }
}

/// Comma-separated simplex point; renormalized within 1e-9.
pub fn parse_point(flag: &str, text: &str, d: usize) -> Result<SimplexPoint, CliError> {
    let coords = parse_list(flag, text)?;
    if coords.len() != d {
        return Err(CliError::Usage(format!("{flag} needs {d} coordinates, got {}", coords.len())));
    }
    let sum: f64 = coords.iter().sum();
    if coords.iter().any(|&c| c < -1e-9) || (sum - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!("{flag} is not a probability vector (sum {sum})")));
    }
    let (p, _) = SimplexPoint::renormalized(coords)?;
    Ok(p)
}

pub fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{flag}: `{s}` is not a finite number")))
        })
        .collect()
}

/// The resolved run configuration embedded in every report.
pub struct Context {
    pub seed: u64,
    pub jobs: usize,
    pub spec: ModelSpec,
    pub table: JumpRateTable,
}

impl Context {
    pub fn config<A: Serialize>(&self, command: &str, args: &A) -> Result<Value, CliError> {
        let model: Value = serde_json::from_str(&model_to_json(&self.spec))
            .map_err(|e| CliError::Io(format!("model serialization: {e}")))?;
        Ok(serde_json::json!({
            "command": command,
            "args": emit::to_value(args)?,
            "model": model,
            "seed": self.seed,
            "jobs": self.jobs,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let model = match &cli.command {
        Command::Simulate(a) => &a.model,
        Command::Lln(a) => &a.model,
        Command::Rate(a) => &a.model,
        Command::Action(a) => &a.model,
        Command::Minimize(a) => &a.model,
        Command::Quasipotential(a) => &a.model,
        Command::Check(a) => &a.model,
        Command::Validate(a) => &a.model,
    };
    let spec = model.load()?;
    let ctx = Context {
        seed: cli.seed,
        jobs,
        table: JumpRateTable::new(&spec),
        spec,
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Lln(a) => commands::lln(&ctx, a),
        Command::Rate(a) => commands::rate(&ctx, a),
        Command::Action(a) => commands::action(&ctx, a),
        Command::Minimize(a) => commands::minimize(&ctx, a),
        Command::Quasipotential(a) => commands::quasipotential(&ctx, a),
        Command::Check(a) => commands::check(&ctx, a),
        Command::Validate(a) => validate::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                CliError::Usage(_) => "usage",
                CliError::Domain(_) => "domain",
                CliError::Io(_) => "io",
                CliError::Failed(_) => "check",
            };
            let msg = serde_json::json!({ "error": kind, "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.code())
        }
    }
}
