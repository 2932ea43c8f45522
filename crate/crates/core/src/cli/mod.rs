//! Command-line front end: `simulate`, `compare`, `replay` and `validate`.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for I/O
//! failures. Every failure prints a single diagnostic line.

pub mod config;
pub mod io;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::simworld::{compute_metrics, run_scenario, ScenarioConfig, ScenarioError};
pub use config::{ConfigDocument, ReplayDocument};

pub const DEFAULT_CHECKPOINTS: [f64; 3] = [10.0, 50.0, 100.0];

#[derive(Debug, Parser)]
#[command(
    name = "skylink",
    version,
    about = "UAV-assisted USV geolocation simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write the per-step trace CSV.
    Simulate(SimulateArgs),
    /// Run a scenario and write estimator errors at checkpoints.
    Compare(CompareArgs),
    /// Run the EKF over a recorded measurement log.
    Replay(ReplayArgs),
    /// Check a scenario file without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Trace CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the measurement log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated checkpoint times in seconds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CHECKPOINTS)]
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Measurement log CSV.
    #[arg(long)]
    pub log: PathBuf,
    /// Scenario TOML, or a TOML holding only `[fov]` and `[filter]`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ScenarioError),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let doc = ConfigDocument::parse(&read_text(&args.config)?)?;
    let mut cfg = doc.to_config()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

const STDOUT: &str = "<stdout>";

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_with<F>(path: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), io::IoError>,
{
    let mut out = sink(path)?;
    let shown = path
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| STDOUT.into());
    let to_cli = |e: io::IoError| CliError::Io {
        path: shown.clone(),
        source: match e {
            io::IoError::Io(e) => e,
            io::IoError::Csv(e) => std::io::Error::other(e.to_string()),
        },
    };
    f(&mut out).map_err(to_cli)?;
    out.flush().map_err(|e| to_cli(io::IoError::Io(e)))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_scenario(&args.scenario)?;
    let trace = run_scenario(&cfg)?;
    info!("simulated {} steps", trace.len());
    write_with(args.output.as_deref(), |w| io::write_trace(w, &trace))?;
    if let Some(log) = &args.log {
        let entries = io::log_from_trace(&cfg, &trace);
        write_with(Some(log), |w| io::write_log(w, &entries))?;
    }
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let cfg = load_scenario(&args.scenario)?;
    if let Some(&c) = args
        .checkpoints
        .iter()
        .find(|&&c| !(c >= 0.0 && c <= cfg.duration))
    {
        return Err(ScenarioError::new(
            "checkpoints",
            format!("{c} is outside [0, {}]", cfg.duration),
        )
        .into());
    }
    let trace = run_scenario(&cfg)?;
    let report = compute_metrics(&trace, &args.checkpoints)?;
    write_with(args.output.as_deref(), |w| io::write_metrics(w, &report))
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let (fov, filter) = ReplayDocument::parse(&read_text(&args.config)?)?;
    let file = File::open(&args.log).map_err(|e| CliError::io(&args.log, e))?;
    let entries = io::read_log(BufReader::new(file)).map_err(|e| match e {
        io::ReadLogError::Format(f) => CliError::Input {
            path: args.log.display().to_string(),
            message: f.to_string(),
        },
        io::ReadLogError::Io(e) => CliError::io(&args.log, e),
    })?;
    let rows = io::replay(&entries, &fov, &filter);
    info!(
        "replayed {} log rows into {} estimates",
        entries.len(),
        rows.len()
    );
    write_with(args.output.as_deref(), |w| io::write_replay(w, &rows))
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let doc = ConfigDocument::parse(&read_text(&args.config)?)?;
    let cfg = doc.to_config()?;
    println!("ok: {} steps, seed {}", cfg.steps(), cfg.seed);
    Ok(())
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
