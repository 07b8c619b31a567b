//! `aoi-pomdp`: solve, simulate and sweep the energy-harvesting status-update
//! problem, writing CSV and JSON artifacts.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{DepthSetting, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] aoi_pomdp::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(aoi_pomdp::Error::InvalidParameter { .. }) => 2,
            CliError::Model(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aoi-pomdp", version, about = "Age-of-information scheduling with belief-state POMDP policies")]
struct Cli {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Debug, Subcommand)]
enum Mode {
    /// Solve the belief MDP; writes solve.json, policy.csv, values.csv and beliefs.csv.
    Solve(Flags),
    /// Simulate single-sensor policies; writes simulate.json and optionally trace.csv.
    Simulate(Flags),
    /// Simulate policies over a parameter grid; writes sweep.csv.
    Sweep(Flags),
    /// Multi-sensor relaxation and simulation; writes multi.csv and multi.json.
    Multi(Flags),
    /// Dump the solved policy as an (r, Δ) by belief grid; writes policy_grid.csv and thresholds.json.
    PolicyDump(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON file with flat keys; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    battery: Option<usize>,
    #[arg(long)]
    delta_max: Option<usize>,
    /// Truncation depth: an integer or `auto`.
    #[arg(long)]
    m: Option<DepthSetting>,
    #[arg(long)]
    m_auto_eps: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sensors: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// Per-class depth cap for multi-sensor solves.
    #[arg(long)]
    depth_cap: Option<usize>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Swept parameter: lambda, p, battery or delta_max (sweep); sensors or gamma (multi).
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Slots of episode 0 to write to trace.csv (simulate).
    #[arg(long)]
    trace_slots: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        Ok(file.overlay(RunConfig {
            lambda: self.lambda,
            p: self.p,
            battery: self.battery,
            delta_max: self.delta_max,
            m: self.m,
            m_auto_eps: self.m_auto_eps,
            theta: self.theta,
            seed: self.seed,
            slots: self.slots,
            episodes: self.episodes,
            warmup: self.warmup,
            gamma: self.gamma,
            sensors: self.sensors,
            budget: self.budget,
            rates: None,
            depth_cap: self.depth_cap,
            policy: self.policy,
            sweep_param: self.param,
            sweep_values: self.values,
            trace_slots: self.trace_slots,
            out: self.out,
        }))
    }
}

type Runner = fn(&config::Resolved) -> Result<(), CliError>;

fn execute(cli: Cli) -> Result<(), CliError> {
    let (flags, mode): (Flags, Runner) = match cli.mode {
        Mode::Solve(f) => (f, run::solve),
        Mode::Simulate(f) => (f, run::simulate),
        Mode::Sweep(f) => (f, run::sweep),
        Mode::Multi(f) => (f, run::multi),
        Mode::PolicyDump(f) => (f, run::policy_dump),
    };
    let resolved = flags.into_config()?.resolve()?;
    std::fs::create_dir_all(&resolved.out).map_err(|source| CliError::Io {
        path: resolved.out.clone(),
        source,
    })?;
    mode(&resolved)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
