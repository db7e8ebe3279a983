//! `cgolab` batch driver. Each subcommand reads an optional TOML config,
//! writes its tables and reports into an output directory and indexes them
//! in `manifest.json`. Exit status: 0 when the run meets its thresholds,
//! 1 when it does not, 2 for configuration errors, 3 for runtime failures.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::*;
use output::Output;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgolab", version, about = "CGO solutions, DtN maps and Fourier-mode reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `out/<subcommand>`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate the config, print it with defaults filled in, and exit.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sampled check of the pointwise bound on the 3D fundamental solution.
    VerifyFundsol,
    /// Kato norm, modulus and mollification table of a potential.
    KatoNorm,
    /// CGO remainders and weighted resolvent norms over a |z| schedule.
    CgoDecay,
    /// Discrete Dirichlet-to-Neumann matrix of a potential.
    DtnForward,
    /// Fourier modes of V1 - V2 from two DtN maps, and their inversion.
    Reconstruct,
    /// Error of one mode against the CGO parameter s.
    ConvergenceStudy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyFundsol => "verify-fundsol",
            Command::KatoNorm => "kato-norm",
            Command::CgoDecay => "cgo-decay",
            Command::DtnForward => "dtn-forward",
            Command::Reconstruct => "reconstruct",
            Command::ConvergenceStudy => "convergence-study",
        }
    }
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load<T>(src: &Source, validate: impl Fn(&T, &Source) -> Result<(), ConfigError>) -> Result<T, ConfigError>
where
    T: serde::de::DeserializeOwned,
{
    let cfg: T = src.parse()?;
    validate(&cfg, src)?;
    Ok(cfg)
}

fn run_with<T: Serialize>(
    cli: &Cli,
    cfg: T,
    run: impl FnOnce(&T, &mut Output) -> anyhow::Result<commands::Finished>,
    threads: usize,
) -> Result<bool, Failure> {
    let name = cli.command.name();
    if cli.check {
        let echo = serde_json::to_string_pretty(&cfg).map_err(anyhow::Error::from)?;
        println!("{echo}");
        return Ok(true);
    }
    let dir = cli.out.clone().unwrap_or_else(|| Path::new("out").join(name));
    let mut out = Output::create(&dir)?;
    out.stage("setup");
    let done = run(&cfg, &mut out)?;
    let echo = serde_json::to_value(&cfg).map_err(anyhow::Error::from)?;
    out.finish(name, cli.config.as_deref(), echo, threads, done.passed, done.summary)?;
    Ok(done.passed)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let src = Source::read(cli.config.as_deref())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError {
                file: "--threads".into(),
                line: None,
                message: "thread count must be at least 1".into(),
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(anyhow::Error::from)?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::VerifyFundsol => run_with(cli, load(&src, FundsolConfig::validate)?, commands::verify_fundsol, threads),
        Command::KatoNorm => run_with(cli, load(&src, KatoConfig::validate)?, commands::kato, threads),
        Command::CgoDecay => run_with(cli, load(&src, CgoConfig::validate)?, commands::cgo_decay, threads),
        Command::DtnForward => run_with(cli, load(&src, DtnConfig::validate)?, commands::dtn_forward, threads),
        Command::Reconstruct => run_with(cli, load(&src, ReconstructConfig::validate)?, commands::reconstruct, threads),
        Command::ConvergenceStudy => run_with(cli, load(&src, ConvergenceConfig::validate)?, commands::convergence, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: acceptance thresholds not met (see manifest.json)", cli.command.name());
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
