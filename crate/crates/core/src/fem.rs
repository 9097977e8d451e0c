//! Piecewise-linear finite elements for the obstacle problem
//! `min{-Delta_p u, u - phi} = 0`, solved as minimization of the smoothed
//! p-Dirichlet energy `sum_T |T| (|grad v|^2 + eps^2)^{p/2}` over
//! `{v >= phi at the vertices, v = g on the boundary}`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_exponent, Error, Result};
use crate::mesh::{build_mesh, Domain, Mesh};
use crate::obstacle::Obstacle;

/// Triangles per work unit in parallel reductions. Fixed so the reduction
/// order, and hence every sum, does not depend on the thread count.
pub const CHUNK: usize = 2048;
/// Maximum number of step halvings per iteration.
pub const MAX_HALVINGS: usize = 60;
/// Default contact tolerance factor (`u - phi <= factor h^2`).
pub const DEFAULT_TOL_FACTOR: f64 = 4.0;

pub type BoundaryFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec {
    pub p: f64,
    pub obstacle: Obstacle,
    pub boundary_data: BoundaryFn,
    pub domain: Domain,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("p", &self.p)
            .field("obstacle", &self.obstacle)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new<G>(p: f64, obstacle: Obstacle, boundary_data: G, domain: Domain) -> Result<Self>
    where
        G: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    {
        check_exponent(p)?;
        if obstacle.dim() != 2 {
            return Err(Error::InvalidArgument("the solver needs a planar obstacle".into()));
        }
        Ok(Self {
            p,
            obstacle,
            boundary_data: Arc::new(boundary_data),
            domain,
        })
    }

    pub fn phi(&self, x: [f64; 2]) -> f64 {
        self.obstacle.value(&x)
    }

    pub fn g(&self, x: [f64; 2]) -> f64 {
        (self.boundary_data)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    BarzilaiBorweinWithBacktracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Stage tolerance on the projected gradient, relative to `1 + |energy|`.
    /// The final stage uses it as an absolute bound.
    pub tol: f64,
    /// Iteration cap per smoothing stage.
    pub max_iters: usize,
    pub epsilon_schedule: Vec<f64>,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200_000,
            epsilon_schedule: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            step_rule: StepRule::BarzilaiBorweinWithBacktracking,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        let s = &self.epsilon_schedule;
        if s.is_empty() || s.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument("epsilon schedule must be non-empty and positive".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("epsilon schedule must be strictly decreasing".into()));
        }
        if *s.last().unwrap() > 1e-8 {
            return Err(Error::InvalidArgument("epsilon schedule must end at or below 1e-8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub epsilon: f64,
    pub iterations: usize,
    pub energy: f64,
    pub projected_gradient: f64,
    pub threshold: f64,
    pub converged: bool,
    /// Set when 60 halvings failed to decrease the energy.
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_energy: f64,
    pub final_projected_gradient: f64,
    pub converged: bool,
    pub stages: Vec<StageStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub mesh: Mesh,
    pub nodal_values: Vec<f64>,
    /// Obstacle at the vertices.
    pub obstacle_values: Vec<f64>,
    pub p: f64,
    pub final_epsilon: f64,
    pub stats: SolveStats,
    pub converged: bool,
    /// Energy after every accepted step, across all stages.
    pub energy_history: Vec<f64>,
}

impl DiscreteSolution {
    /// Nodal `u - phi`.
    pub fn gap(&self) -> Vec<f64> {
        self.nodal_values
            .iter()
            .zip(&self.obstacle_values)
            .map(|(u, f)| u - f)
            .collect()
    }

    /// Writes `x1,x2,u,phi,contact_flag` with contact `u - phi <= tol_factor h^2`.
    pub fn write_csv<W: Write>(&self, mut out: W, tol_factor: f64) -> Result<()> {
        let tol = tol_factor * self.mesh.h * self.mesh.h;
        writeln!(out, "x1,x2,u,phi,contact_flag")?;
        for (i, x) in self.mesh.vertices.iter().enumerate() {
            let (u, f) = (self.nodal_values[i], self.obstacle_values[i]);
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                x[0],
                x[1],
                u,
                f,
                u8::from(u - f <= tol)
            )?;
        }
        Ok(())
    }
}

/// Mesh data reused by every energy and gradient evaluation.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub area: Vec<f64>,
    /// Constant gradients of the three hat functions on each triangle.
    pub basis: Vec<[[f64; 2]; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub mass: Vec<f64>,
    adj_start: Vec<usize>,
    adj: Vec<(u32, u8)>,
}

impl Discretization {
    pub fn new(mesh: &Mesh) -> Self {
        let nt = mesh.triangles.len();
        let mut area = Vec::with_capacity(nt);
        let mut basis = Vec::with_capacity(nt);
        for t in 0..nt {
            let [a, b, c] = mesh.triangle_points(t);
            let two_a = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let pts = [a, b, c];
            let mut g = [[0.0; 2]; 3];
            for i in 0..3 {
                let (q, r) = (pts[(i + 1) % 3], pts[(i + 2) % 3]);
                g[i] = [(q[1] - r[1]) / two_a, (r[0] - q[0]) / two_a];
            }
            area.push(0.5 * two_a);
            basis.push(g);
        }
        let nv = mesh.vertices.len();
        let mut counts = vec![0usize; nv + 1];
        for tri in &mesh.triangles {
            for &v in tri {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut adj = vec![(0u32, 0u8); counts[nv]];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for (l, &v) in tri.iter().enumerate() {
                adj[fill[v]] = (t as u32, l as u8);
                fill[v] += 1;
            }
        }
        Self {
            area,
            basis,
            triangles: mesh.triangles.clone(),
            mass: mesh.lumped_mass(),
            adj_start: counts,
            adj,
        }
    }

    fn tri_grad(&self, t: usize, v: &[f64]) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let g = &self.basis[t];
        [
            v[a] * g[0][0] + v[b] * g[1][0] + v[c] * g[2][0],
            v[a] * g[0][1] + v[b] * g[1][1] + v[c] * g[2][1],
        ]
    }

    fn chunked_sum<F>(&self, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        let partial: Vec<f64> = (0..self.area.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|ts| ts.iter().map(|&t| f(t)).sum::<f64>())
            .collect();
        partial.iter().sum()
    }

    pub fn energy(&self, p: f64, v: &[f64], eps: f64) -> f64 {
        let e2 = eps * eps;
        self.chunked_sum(|t| {
            let g = self.tri_grad(t, v);
            self.area[t] * (g[0] * g[0] + g[1] * g[1] + e2).powf(0.5 * p)
        })
    }

    /// `E(v + s) - E(v)`, evaluated triangle by triangle from the step so
    /// that differences far below the energy's rounding level are resolved.
    pub fn energy_change(&self, p: f64, v: &[f64], s: &[f64], eps: f64) -> f64 {
        let e2 = eps * eps;
        let q = 0.5 * p;
        self.chunked_sum(|t| {
            let g = self.tri_grad(t, v);
            let d = self.tri_grad(t, s);
            let b = g[0] * g[0] + g[1] * g[1] + e2;
            let delta = d[0] * (2.0 * g[0] + d[0]) + d[1] * (2.0 * g[1] + d[1]);
            let change = if b > 0.0 {
                b.powf(q) * (q * (delta / b).ln_1p()).exp_m1()
            } else {
                (delta + b).powf(q)
            };
            self.area[t] * change
        })
    }

    /// Exact gradient of [`Discretization::energy`] with respect to the
    /// nodal values.
    pub fn gradient(&self, p: f64, v: &[f64], eps: f64) -> Vec<f64> {
        let e2 = eps * eps;
        let flux: Vec<[f64; 2]> = (0..self.area.len())
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|t| {
                let g = self.tri_grad(t, v);
                let s = g[0] * g[0] + g[1] * g[1] + e2;
                let c = if s > 0.0 { p * self.area[t] * s.powf(0.5 * p - 1.0) } else { 0.0 };
                [c * g[0], c * g[1]]
            })
            .collect();
        (0..v.len())
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                self.adj[self.adj_start[i]..self.adj_start[i + 1]]
                    .iter()
                    .map(|&(t, l)| {
                        let b = self.basis[t as usize][l as usize];
                        let f = flux[t as usize];
                        f[0] * b[0] + f[1] * b[1]
                    })
                    .sum()
            })
            .collect()
    }
}

fn check_len(mesh: &Mesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.vertices.len() {
        return Err(Error::InvalidArgument(format!(
            "{} values for {} vertices",
            values.len(),
            mesh.vertices.len()
        )));
    }
    Ok(())
}

/// Smoothed p-Dirichlet energy `sum_T |T| (|grad v|^2 + eps^2)^{p/2}`.
pub fn energy(spec: &ProblemSpec, mesh: &Mesh, values: &[f64], eps: f64) -> Result<f64> {
    check_len(mesh, values)?;
    Ok(Discretization::new(mesh).energy(spec.p, values, eps))
}

/// Gradient of [`energy`] including boundary entries.
pub fn energy_gradient(spec: &ProblemSpec, mesh: &Mesh, values: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_len(mesh, values)?;
    if spec.p < 2.0 && !(eps > 0.0) {
        return Err(Error::InvalidArgument("p < 2 needs a positive smoothing parameter".into()));
    }
    Ok(Discretization::new(mesh).gradient(spec.p, values, eps))
}

/// `max_i |min(r_i, gap_i)|` over interior vertices with `r = gradient / mass`.
fn projected_residual(grad: &[f64], mass: &[f64], gap: &[f64], free: &[usize]) -> f64 {
    free.iter()
        .map(|&i| (grad[i] / mass[i]).min(gap[i]).abs())
        .fold(0.0, f64::max)
}

/// Solves on a fresh structured mesh of size `h`.
pub fn solve(spec: &ProblemSpec, config: &SolverConfig, h: f64) -> Result<DiscreteSolution> {
    let mesh = build_mesh(spec.domain, h)?;
    solve_on_mesh(spec, config, mesh)
}

/// Projected Barzilai-Borwein descent in the lumped-mass metric, one stage
/// per smoothing parameter, each warm-started from the previous one.
pub fn solve_on_mesh(spec: &ProblemSpec, config: &SolverConfig, mesh: Mesh) -> Result<DiscreteSolution> {
    config.validate()?;
    check_exponent(spec.p)?;
    let p = spec.p;
    let n = mesh.vertices.len();
    let phi: Vec<f64> = mesh.vertices.iter().map(|&x| spec.phi(x)).collect();
    let mut v = vec![0.0; n];
    let mut boundary_sum = 0.0;
    let mut boundary_count = 0usize;
    for i in 0..n {
        if mesh.boundary_flags[i] {
            let g = spec.g(mesh.vertices[i]);
            if !(g >= phi[i] - 1e-12) {
                return Err(Error::IncompatibleBoundary { vertex: i, g, phi: phi[i] });
            }
            v[i] = g;
            boundary_sum += g;
            boundary_count += 1;
        }
    }
    let start = if boundary_count > 0 { boundary_sum / boundary_count as f64 } else { 0.0 };
    let free: Vec<usize> = (0..n).filter(|&i| !mesh.boundary_flags[i]).collect();
    for &i in &free {
        v[i] = phi[i].max(start);
    }

    let disc = Discretization::new(&mesh);
    let mass = &disc.mass;
    let mut history = Vec::new();
    let mut stages = Vec::new();
    let mut total_iters = 0;
    let mut alpha = mesh.h * mesh.h;
    let last = config.epsilon_schedule.len() - 1;
    let mut gap: Vec<f64> = v.iter().zip(&phi).map(|(a, b)| a - b).collect();

    for (stage, &eps) in config.epsilon_schedule.iter().enumerate() {
        let mut e = disc.energy(p, &v, eps);
        let mut grad = disc.gradient(p, &v, eps);
        history.push(e);
        let mut res = projected_residual(&grad, mass, &gap, &free);
        let mut iters = 0;
        let mut stalled = false;
        let threshold = |e: f64| {
            if stage == last {
                config.tol
            } else {
                config.tol * (1.0 + e.abs())
            }
        };
        let mut step = vec![0.0; n];
        while res > threshold(e) && iters < config.max_iters {
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                for &i in &free {
                    let trial = (v[i] - alpha * grad[i] / mass[i]).max(phi[i]);
                    step[i] = trial - v[i];
                }
                let de = disc.energy_change(p, &v, &step, eps);
                if de <= 0.0 && step.iter().any(|&s| s != 0.0) {
                    accepted = Some(de);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(de) = accepted else {
                stalled = true;
                break;
            };
            for &i in &free {
                v[i] = (v[i] + step[i]).max(phi[i]);
                gap[i] = v[i] - phi[i];
            }
            e += de;
            history.push(e);
            let new_grad = disc.gradient(p, &v, eps);
            let (mut sms, mut sy) = (0.0, 0.0);
            for &i in &free {
                sms += mass[i] * step[i] * step[i];
                sy += step[i] * (new_grad[i] - grad[i]);
            }
            grad = new_grad;
            alpha = if sy > 0.0 { sms / sy } else { 2.0 * alpha };
            alpha = alpha.clamp(1e-6 * mesh.h * mesh.h, 1e6);
            res = projected_residual(&grad, mass, &gap, &free);
            iters += 1;
        }
        total_iters += iters;
        let energy = disc.energy(p, &v, eps);
        stages.push(StageStats {
            epsilon: eps,
            iterations: iters,
            energy,
            projected_gradient: res,
            threshold: threshold(energy),
            converged: res <= threshold(energy),
            stalled,
        });
    }

    let final_stage = stages.last().unwrap().clone();
    let converged = stages.iter().all(|s| s.converged);
    Ok(DiscreteSolution {
        mesh,
        nodal_values: v,
        obstacle_values: phi,
        p,
        final_epsilon: final_stage.epsilon,
        stats: SolveStats {
            iterations: total_iters,
            final_energy: final_stage.energy,
            final_projected_gradient: final_stage.projected_gradient,
            converged,
            stages,
        },
        converged,
        energy_history: history,
    })
}

/// `max |min(r_i, (u - phi)_i)|` over interior vertices, `r` the smoothed
/// energy gradient divided by the lumped mass.
pub fn complementarity_residual(spec: &ProblemSpec, solution: &DiscreteSolution) -> Result<f64> {
    let mesh = &solution.mesh;
    check_len(mesh, &solution.nodal_values)?;
    let disc = Discretization::new(mesh);
    let grad = disc.gradient(spec.p, &solution.nodal_values, solution.final_epsilon);
    let gap: Vec<f64> = mesh
        .vertices
        .iter()
        .zip(&solution.nodal_values)
        .map(|(&x, u)| u - spec.phi(x))
        .collect();
    let free: Vec<usize> = (0..mesh.vertices.len()).filter(|&i| !mesh.boundary_flags[i]).collect();
    Ok(projected_residual(&grad, &disc.mass, &gap, &free))
}
