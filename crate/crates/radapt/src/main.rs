use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use radapt::config::{Overrides, RunConfig};
use radapt::error::Result;
use radapt::Command;

#[derive(Debug, Parser)]
#[command(name = "radapt", version, about = "Adaptive Radau IIA time stepping and Laplace-domain model reduction experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Flat `key = value` file; its entries take precedence over flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Adaptive and uniform convergence on the heat benchmark.
    Convergence(Common),
    /// Hybrid against Crank-Nicolson over a ladder of spatial sizes.
    CompareSchemes(Common),
    /// Discrete inf-sup constants over a (lambda, n) grid.
    Infsup(Common),
    /// Reduced runs over the (M, R) grid.
    Mor(Common),
    /// Snapshot singular values for each M.
    SvdDecay(Common),
    /// Sparse kernels against the dense spectral reference.
    OracleCheck(Common),
}

fn run(cli: Cli) -> Result<()> {
    let (cmd, common) = match cli.cmd {
        Sub::Convergence(c) => (Command::Convergence, c),
        Sub::CompareSchemes(c) => (Command::CompareSchemes, c),
        Sub::Infsup(c) => (Command::Infsup, c),
        Sub::Mor(c) => (Command::Mor, c),
        Sub::SvdDecay(c) => (Command::SvdDecay, c),
        Sub::OracleCheck(c) => (Command::OracleCheck, c),
    };
    let file = common.config.as_deref().map(Overrides::from_file).transpose()?;
    let cfg = RunConfig::resolve(&common.overrides, file.as_ref())?;
    let files = radapt::run(cmd, &cfg)?;
    for f in files {
        println!("{}", cfg.out.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
