use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iir_cli::config::RunConfig;
use iir_cli::{execute, reproduce_paper, CliError, Command, Overrides};

#[derive(Parser)]
#[command(name = "iir", version, about = "Invariant image reparameterisation of mechanistic models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Built-in model name (overrides the config).
    #[arg(long, global = true)]
    model: Option<String>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `published`, `synthetic`, or a path to a file of numbers.
    #[arg(long, global = true)]
    data: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use rounded exponents for the new coordinates (default).
    #[arg(long, global = true, overrides_with = "unrounded")]
    rounded: bool,
    /// Use the raw singular vectors as exponents.
    #[arg(long, global = true, overrides_with = "rounded")]
    unrounded: bool,
    /// Degrees of freedom for every threshold.
    #[arg(long, global = true)]
    df: Option<u32>,
    /// Confidence level.
    #[arg(long, global = true)]
    level: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// SVD analysis, monomial coordinates and invariance check.
    Reparam,
    /// Maximum likelihood in original and new coordinates.
    Mle,
    /// Profile likelihoods.
    Profile,
    /// Profile-wise prediction bands.
    Predict,
    /// Rank of the observed Fisher information against the Jacobian.
    FisherCheck,
    /// Run every worked example end to end.
    ReproducePaper,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let command = match cli.command {
        Cmd::Reparam => Command::Reparam,
        Cmd::Mle => Command::Mle,
        Cmd::Profile => Command::Profile,
        Cmd::Predict => Command::Predict,
        Cmd::FisherCheck => Command::FisherCheck,
        Cmd::ReproducePaper => Command::ReproducePaper,
    };
    let overrides = Overrides {
        model: cli.model.clone(),
        data: cli.data.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        rounded: if cli.unrounded {
            Some(false)
        } else if cli.rounded {
            Some(true)
        } else {
            None
        },
        df: cli.df,
        level: cli.level,
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if command == Command::ReproducePaper => RunConfig {
            output_dir: "paper-out".into(),
            ..RunConfig::default()
        },
        None => match &cli.model {
            Some(m) => RunConfig::for_model(m),
            None => return Err(CliError::Validation("give --model or --config".into())),
        },
    };
    overrides.apply(&mut cfg);
    if command == Command::ReproducePaper {
        return reproduce_paper(&cfg, Some(&overrides));
    }
    execute(command, cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("iir: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
