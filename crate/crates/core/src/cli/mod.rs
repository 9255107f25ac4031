//! The `liouflow` command line: one subcommand per analysis, driven by a
//! TOML scenario file.

pub mod config;
pub mod output;
mod runners;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::ScenarioConfig;
use output::{sha256_hex, ManifestHeader, Outputs};
use runners::Model;

pub const TOOL: &str = "liouflow";
pub const DEFAULT_OUT_DIR: &str = "liouflow-out";

#[derive(Debug, Parser)]
#[command(name = "liouflow", version, about = "Phase-space flows of open quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Flow,
    Traj,
    Ensemble,
    Compress,
    Fluxcheck,
    Nz,
    Classical,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Flow => "flow",
            Kind::Traj => "traj",
            Kind::Ensemble => "ensemble",
            Kind::Compress => "compress",
            Kind::Fluxcheck => "fluxcheck",
            Kind::Nz => "nz",
            Kind::Classical => "classical",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Velocity field on a lattice
    Flow(RunArgs),
    /// Integrated trajectories with exact snapshots
    Traj(RunArgs),
    /// Monte Carlo and Gaussian transport of an ensemble
    Ensemble(RunArgs),
    /// Analytic against finite-difference compressibility
    Compress(RunArgs),
    /// Integral continuity check on a ball
    Fluxcheck(RunArgs),
    /// Memory-kernel compressibility of a system-bath model
    Nz(RunArgs),
    /// Classical oscillator phase portrait and ensembles
    Classical(RunArgs),
}

impl Command {
    pub fn split(&self) -> (Kind, &RunArgs) {
        match self {
            Command::Flow(a) => (Kind::Flow, a),
            Command::Traj(a) => (Kind::Traj, a),
            Command::Ensemble(a) => (Kind::Ensemble, a),
            Command::Compress(a) => (Kind::Compress, a),
            Command::Fluxcheck(a) => (Kind::Fluxcheck, a),
            Command::Nz(a) => (Kind::Nz, a),
            Command::Classical(a) => (Kind::Classical, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: liouflow-out/<subcommand>]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// RNG seed; overrides the scenario's `seed`
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code: 0 on success, 1 for usage and configuration errors, 2 for runtime
/// failures.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (kind, args) = cli.command.split();
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new(DEFAULT_OUT_DIR).join(kind.name()));
    match run(kind, &args.config, &out_dir, args.seed) {
        Ok(files) => {
            println!("{TOOL} {}: wrote {} files to {}", kind.name(), files.len(), out_dir.display());
            0
        }
        Err(e) => {
            eprintln!("{TOOL}: error: {e}");
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}

/// Loads the scenario at `config_path`, runs `kind` and writes the results
/// and manifest to `out_dir`. An explicit `seed` overrides the scenario's.
pub fn run(kind: Kind, config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let raw = std::fs::read(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| Error::Config(format!("{} is not UTF-8", config_path.display())))?;
    let cfg = ScenarioConfig::from_toml(&text)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let outputs = run_config(kind, &cfg, seed)?;
    let header = ManifestHeader {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        subcommand: kind.name().to_owned(),
        seed,
        config_sha256: sha256_hex(&raw),
        config: serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?,
    };
    outputs.write(out_dir, header)
}

/// Runs `kind` on a parsed scenario and returns the files in memory.
pub fn run_config(kind: Kind, cfg: &ScenarioConfig, seed: u64) -> Result<Outputs> {
    let model = Model::build(&cfg.model).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(format!("model: {other}")),
    })?;
    match kind {
        Kind::Flow => runners::flow(cfg, &model),
        Kind::Traj => runners::traj(cfg, &model),
        Kind::Ensemble => runners::ensemble(cfg, &model, seed),
        Kind::Compress => runners::compress(cfg, &model, seed),
        Kind::Fluxcheck => runners::fluxcheck(cfg, &model, seed),
        Kind::Nz => runners::nz(cfg, &model),
        Kind::Classical => runners::classical(cfg, &model, seed),
    }
}
