use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdrive_core::Error;

mod config;
mod run;

use config::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. }
            | Error::Layout(_)
            | Error::NotHermitian { .. }
            | Error::NotDensity { .. }
            | Error::InvalidArgument(_)
            | Error::InsufficientTruncation { .. }
            | Error::UnsupportedModel(_)
            | Error::BetaMismatch { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

/// Quantized-drive work and heat experiments.
#[derive(Parser)]
#[command(name = "qdrive", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed JC run, ledger CSV.
    JcUnitary(RunArgs),
    /// JC run with golden-rule decay, ledger CSV.
    JcDissipative(RunArgs),
    /// Quantum vs classically driven work for a coherent drive.
    ClassicalCompare(RunArgs),
    /// Exponentiated exclusive work at one measurement time.
    BkIdentity(RunArgs),
    /// Scaling of the exponentiated-work deviation with n̄.
    BkSweep(RunArgs),
    /// Resolve a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
    },
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let (experiment, args) = match cli.command {
        Command::Validate { config, experiment } => {
            return Ok(config::load(&config, experiment)?.to_config_string().trim_end().to_string());
        }
        Command::JcUnitary(a) => (Experiment::JcUnitary, a),
        Command::JcDissipative(a) => (Experiment::JcDissipative, a),
        Command::ClassicalCompare(a) => (Experiment::ClassicalCompare, a),
        Command::BkIdentity(a) => (Experiment::BkIdentity, a),
        Command::BkSweep(a) => (Experiment::BkSweep, a),
    };
    let cfg = config::load(&args.config, Some(experiment))?;
    let out_dir = args
        .out
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = run::run(&cfg, &out_dir)?;
    let files: Vec<String> = outcome.files.iter().map(|f| f.display().to_string()).collect();
    Ok(format!("{} [{}]", outcome.summary, files.join(", ")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
