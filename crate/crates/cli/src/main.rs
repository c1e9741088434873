use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod figures;
mod session;

use config::RunConfig;
use error::CliError;
use figures::Stage;
use session::Session;

/// Optimal detector-array combinations for confocal sectioning.
#[derive(Parser)]
#[command(name = "confocal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration. Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Neither read nor write the field cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the focal field and write the field dump.
    Field(#[command(flatten)] Common),
    /// Build the OTF stack and focal mask.
    Otfs(#[command(flatten)] Common),
    /// Solve for the optimal combination under each truncation policy.
    Optimize(#[command(flatten)] Common),
    /// Power partition, defocus curves and object images.
    Analyze(#[command(flatten)] Common),
    /// Improvement factor across aperture half-angles.
    Sweep(#[command(flatten)] Common),
    /// Run the canned configuration for one figure.
    Reproduce {
        /// Figure number.
        id: u32,
        #[command(flatten)]
        common: Common,
    },
}

fn run_stage(session: &mut Session, stage: Stage) -> Result<(), CliError> {
    match stage {
        Stage::Field => commands::field(session),
        Stage::Otfs => commands::otfs(session),
        Stage::Optimize => commands::optimize(session),
        Stage::Analyze => commands::analyze(session),
        Stage::Sweep => commands::sweep(session),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, config, stages): (Common, RunConfig, Vec<Stage>) = match cli.command {
        Command::Reproduce { id, common } => {
            let (figure, mut config) = figures::lookup(id)?;
            if let Some(path) = &common.config {
                config = RunConfig::load(path)?;
            }
            (common, config, figure.stages.to_vec())
        }
        other => {
            let (common, stage) = match other {
                Command::Field(c) => (c, Stage::Field),
                Command::Otfs(c) => (c, Stage::Otfs),
                Command::Optimize(c) => (c, Stage::Optimize),
                Command::Analyze(c) => (c, Stage::Analyze),
                Command::Sweep(c) => (c, Stage::Sweep),
                Command::Reproduce { .. } => unreachable!(),
            };
            let config = match &common.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            (common, config, vec![stage])
        }
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        confocal_core::exec::init_threads(n);
    }
    let mut session = Session::new(config, common.out, common.no_cache)?;
    for stage in stages {
        run_stage(&mut session, stage)?;
    }
    let manifest = session.finish()?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
