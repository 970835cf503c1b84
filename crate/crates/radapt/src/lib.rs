//! Experiment drivers, file formats and configuration for the `radapt` command line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

use std::fs;

use config::RunConfig;
use error::Result;

/// The experiment subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Convergence,
    CompareSchemes,
    Infsup,
    Mor,
    SvdDecay,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::CompareSchemes => "compare-schemes",
            Self::Infsup => "infsup",
            Self::Mor => "mor",
            Self::SvdDecay => "svd-decay",
            Self::OracleCheck => "oracle-check",
        }
    }
}

/// Runs `cmd`, writing its tables and `manifest.json` into `cfg.out`.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;
    let files = match cmd {
        Command::Convergence => experiments::run_convergence(cfg, dir)?,
        Command::CompareSchemes => experiments::run_scheme_comparison(cfg, dir)?,
        Command::Infsup => experiments::run_infsup_sweep(cfg, dir)?,
        Command::Mor => experiments::run_mor(cfg, dir)?,
        Command::SvdDecay => experiments::run_svd_decay(cfg, dir)?,
        Command::OracleCheck => experiments::run_oracle_check(cfg, dir)?,
    };
    io::write_manifest(dir, cmd.name(), cfg, &files)?;
    Ok(files)
}
