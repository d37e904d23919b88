use std::path::PathBuf;
use std::process::ExitCode;

use bosefeed::experiments::{self, Experiment, RunConfig};
use bosefeed::{Error, Result};
use clap::{Parser, Subcommand};

/// Quantum feedback on bosonic gases: figure tables, single runs and the
/// validation suite.
#[derive(Parser)]
#[command(name = "bosefeed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Momentum variance after one loop versus atom number (CSV).
    Fig2(RunArgs),
    /// Uncertainty product after one loop versus atom number (CSV).
    Fig3(RunArgs),
    /// Kernel path against the Fock-space oracle and closed forms (JSON).
    Validate(RunArgs),
    /// Moments for the first atom number and width of the config (JSON).
    Single(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (default: `out_path` from the config, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(experiment: Experiment, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None if args.print_config => RunConfig::default(),
        None => return Err(Error::Config("--config <path> is required".into())),
    };
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(Error::Config(format!("config is for {e:?} but the command is {experiment:?}")));
        }
    }
    cfg.experiment = Some(experiment);
    Ok(cfg)
}

fn write(cfg: &RunConfig, args: &RunArgs, text: &str) -> Result<()> {
    match args.out.clone().or_else(|| cfg.out_path.as_ref().map(PathBuf::from)) {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<bool> {
    let cfg = load(experiment, args)?;
    if args.print_config {
        println!("{}", cfg.to_pretty_json());
        return Ok(true);
    }
    let (text, ok) = match experiment {
        Experiment::Fig2 => (experiments::run_fig2(&cfg)?, true),
        Experiment::Fig3 => (experiments::run_fig3(&cfg)?, true),
        Experiment::Single => (experiments::run_single(&cfg)?, true),
        Experiment::Validate => experiments::run_validate(&cfg)?,
    };
    write(&cfg, args, &text)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Fig2(a) => (Experiment::Fig2, a),
        Command::Fig3(a) => (Experiment::Fig3, a),
        Command::Validate(a) => (Experiment::Validate, a),
        Command::Single(a) => (Experiment::Single, a),
    };
    match run(experiment, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
