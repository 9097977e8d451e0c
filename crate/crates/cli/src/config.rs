use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use plap_core::expr::Expr;
use plap_core::profile::DEFAULT_N_GRID;
use plap_core::{Domain, ObstacleSpec, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Profile,
    Sweep,
    Solve,
    Verify,
    Analyze,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CommandKind::Profile => "profile",
            CommandKind::Sweep => "sweep",
            CommandKind::Solve => "solve",
            CommandKind::Verify => "verify",
            CommandKind::Analyze => "analyze",
        };
        f.write_str(name)
    }
}

/// A single exponent or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponents {
    One(f64),
    Many(Vec<f64>),
}

impl Exponents {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Exponents::One(p) => vec![*p],
            Exponents::Many(ps) => ps.clone(),
        }
    }

    pub fn single(&self) -> anyhow::Result<f64> {
        match self.values().as_slice() {
            [p] => Ok(*p),
            ps => bail!("this command takes a single exponent, got {} values", ps.len()),
        }
    }
}

/// Dirichlet data for `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundarySpec {
    /// Trace of the homogeneous solution for the configured `(p, k)`.
    #[default]
    Profile,
    /// Formula in `x1, x2`.
    Expression { formula: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on the finite-difference ODE residual of a profile table.
    pub ode_residual: f64,
    pub boundary: f64,
    pub weak_form: f64,
    pub symmetry: f64,
    /// Allowed `|theta_hat - theta0|` in `verify`, radians.
    pub angle: f64,
    /// Contact flag threshold `u - phi <= contact_factor h^2`.
    pub contact_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode_residual: 1e-2,
            boundary: 1e-9,
            weak_form: 1e-6,
            symmetry: 1e-8,
            angle: 0.2,
            contact_factor: plap_core::fem::DEFAULT_TOL_FACTOR,
        }
    }
}

fn default_k() -> u32 {
    1
}

fn default_h() -> f64 {
    1.0 / 64.0
}

fn default_n_grid() -> usize {
    DEFAULT_N_GRID
}

fn default_domain() -> Domain {
    Domain::Disk { radius: 1.0 }
}

fn default_exponents() -> Exponents {
    Exponents::One(2.0)
}

/// Everything a run depends on. The copy written to `config.json` reproduces
/// the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default = "default_exponents")]
    pub p: Exponents,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default)]
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(command: CommandKind, out: PathBuf) -> Self {
        Self {
            command,
            p: default_exponents(),
            k: default_k(),
            h: default_h(),
            n_grid: default_n_grid(),
            obstacle: ObstacleSpec::default(),
            boundary: BoundarySpec::default(),
            domain: default_domain(),
            solver: SolverConfig::default(),
            tolerances: Tolerances::default(),
            seed: 0,
            out,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let ps = self.p.values();
        if ps.is_empty() {
            bail!("no exponent given");
        }
        if let Some(p) = ps.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
            bail!("exponent p must satisfy p > 1, got {p}");
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            bail!("mesh size h must be positive, got {}", self.h);
        }
        if self.n_grid < 3 {
            bail!("n_grid must be at least 3, got {}", self.n_grid);
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("ode_residual", t.ode_residual),
            ("boundary", t.boundary),
            ("weak_form", t.weak_form),
            ("symmetry", t.symmetry),
            ("angle", t.angle),
            ("contact_factor", t.contact_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bail!("tolerance {name} must be positive, got {v}");
            }
        }
        self.solver.validate()?;
        if let BoundarySpec::Expression { formula } = &self.boundary {
            let e = Expr::parse(formula)?;
            if e.arity() > 2 {
                bail!("boundary formula may only use x1 and x2: '{formula}'");
            }
        }
        Ok(())
    }
}

/// Parses `0.015625`, `1/64` or `1e-2`.
pub fn parse_h(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            a / b
        }
        None => s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("mesh size must be positive, got '{s}'"))
    }
}
