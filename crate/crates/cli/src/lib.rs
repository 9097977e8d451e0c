//! Command-line front end: argument parsing, run configuration and the
//! subcommands of the `plap` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use plap_core::ObstacleSpec;

use crate::config::{parse_h, BoundarySpec, CommandKind, Exponents, RunConfig};

/// Outcome of a run that got as far as producing results.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Success,
    /// Non-convergence or a defect above tolerance.
    Failed(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "plap", version, about = "Homogeneous solutions and finite-element solves of the p-Laplacian obstacle problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the angular profile for one (p, k) and check it.
    Profile(RunArgs),
    /// Opening angle and admissibility over a list of exponents.
    Sweep(RunArgs),
    /// Solve the discrete obstacle problem.
    Solve(RunArgs),
    /// Compare a discrete solve against the homogeneous solution.
    Verify(RunArgs),
    /// Recompute diagnostics for the output directory of a previous solve.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exponent, or a comma separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    /// Mesh size, e.g. `1/64` or `0.015625`.
    #[arg(long, value_parser = parse_h)]
    pub h: Option<f64>,
    /// Profile grid points.
    #[arg(long)]
    pub ngrid: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap per smoothing stage.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Obstacle as JSON, e.g. '{"kind":"quadratic","a":0,"b":1}'.
    #[arg(long)]
    pub obstacle: Option<String>,
    /// Boundary data as JSON, e.g. '{"kind":"expression","formula":"x1"}'.
    #[arg(long)]
    pub boundary: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Directory written by `plap solve`.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    /// Merges the flags over the configuration file, or over the defaults.
    pub fn resolve(&self, command: CommandKind) -> anyhow::Result<RunConfig> {
        let default_out = PathBuf::from(format!("plap-{command}"));
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(command, default_out),
        };
        cfg.command = command;
        match self.p.as_slice() {
            [] => {}
            [p] => cfg.p = Exponents::One(*p),
            ps => cfg.p = Exponents::Many(ps.to_vec()),
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(n) = self.ngrid {
            cfg.n_grid = n;
        }
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        if let Some(n) = self.max_iters {
            cfg.solver.max_iters = n;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(json) = &self.obstacle {
            cfg.obstacle = serde_json::from_str::<ObstacleSpec>(json).context("parsing --obstacle")?;
        }
        if let Some(json) = &self.boundary {
            cfg.boundary = serde_json::from_str::<BoundarySpec>(json).context("parsing --boundary")?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    let (kind, args) = match &cli.command {
        Command::Profile(a) => (CommandKind::Profile, a),
        Command::Sweep(a) => (CommandKind::Sweep, a),
        Command::Solve(a) => (CommandKind::Solve, a),
        Command::Verify(a) => (CommandKind::Verify, a),
        Command::Analyze(a) => return commands::analyze(&a.out),
    };
    let cfg = args.resolve(kind)?;
    match kind {
        CommandKind::Profile => commands::profile(&cfg),
        CommandKind::Sweep => commands::sweep(&cfg),
        CommandKind::Solve => commands::solve_cmd(&cfg),
        CommandKind::Verify => commands::verify(&cfg),
        CommandKind::Analyze => unreachable!(),
    }
}

/// Runs the CLI and maps the outcome to an exit code, reporting on stderr.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli) {
        Ok(Status::Success) => EXIT_OK,
        Ok(Status::Failed(msg)) => {
            eprintln!("plap: {msg}");
            EXIT_FAILED
        }
        Err(e) => {
            eprintln!("plap: {e:#}");
            EXIT_CONFIG
        }
    }
}
