use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use plap_core::expr::Expr;
use plap_core::fem::SolveStats;
use plap_core::free_boundary::default_rings;
use plap_core::numerics::halton_ball;
use plap_core::obstacle::ConcavityReport;
use plap_core::profile::theta0_closed_form;
use plap_core::{
    admissible_k, angle_at_origin, barrier_search, build_profile, check_profile, complementarity_residual,
    concavity_check, contact_mask, extract_free_boundary, nondegeneracy_scan, porosity_scan, solve, AngleEstimate,
    BarrierResult, DiscreteField, DiscreteSolution, Domain, HomogeneousProfile, Mesh, NondegeneracyReport, Obstacle,
    ObstacleSpec, PorosityReport, ProblemSpec, ProfileCheckReport, ProfileParams, SolutionKind,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BoundarySpec, RunConfig};
use crate::Status;

const CONCAVITY_SAMPLE: usize = 10_000;
const POROSITY_RADII: [f64; 2] = [0.1, 0.2];

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn prepare_out(cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)
}

fn admissible_list(p: f64) -> String {
    match admissible_k(p) {
        Ok(list) if !list.is_empty() => list
            .iter()
            .map(|(k, kind)| format!("{k} ({})", kind_name(*kind)))
            .collect::<Vec<_>>()
            .join(", "),
        _ => "none".into(),
    }
}

fn kind_name(kind: SolutionKind) -> &'static str {
    match kind {
        SolutionKind::ObstacleSolution => "obstacle-solution",
        SolutionKind::GlobalPharmonic => "global-pharmonic",
    }
}

fn load_profile(p: f64, k: u32, n_grid: usize) -> anyhow::Result<HomogeneousProfile> {
    let params = ProfileParams::new(p, k, n_grid)
        .map_err(|e| anyhow!("{e}; admissible k for p = {p}: {}", admissible_list(p)))?;
    Ok(build_profile(params)?)
}

fn domain_radius(domain: Domain) -> f64 {
    match domain {
        Domain::Disk { radius } => radius,
        Domain::Square { side } => side / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub p: f64,
    pub k: u32,
    pub kind: SolutionKind,
    pub theta0: f64,
    pub theta0_closed_form: f64,
    pub contact_rays: Vec<f64>,
    pub check: ProfileCheckReport,
    pub failures: Vec<String>,
    pub passed: bool,
}

fn profile_failures(check: &ProfileCheckReport, cfg: &RunConfig) -> Vec<String> {
    let t = &cfg.tolerances;
    let mut out = Vec::new();
    if !(check.ode_residual_max <= t.ode_residual) {
        out.push(format!("ODE residual {:e} exceeds {:e}", check.ode_residual_max, t.ode_residual));
    }
    let bc = check.bc_defects.iter().copied().fold(0.0, f64::max);
    if !(bc <= t.boundary) {
        out.push(format!("boundary defect {bc:e} exceeds {:e}", t.boundary));
    }
    if !(check.weak_form_defect <= t.weak_form) {
        out.push(format!("weak-form defect {:e} exceeds {:e}", check.weak_form_defect, t.weak_form));
    }
    if !(check.symmetry_defect <= t.symmetry) {
        out.push(format!("symmetry defect {:e} exceeds {:e}", check.symmetry_defect, t.symmetry));
    }
    out
}

pub fn profile(cfg: &RunConfig) -> anyhow::Result<Status> {
    let p = cfg.p.single()?;
    let prof = load_profile(p, cfg.k, cfg.n_grid)?;
    let check = check_profile(&prof)?;
    prepare_out(cfg)?;
    let mut csv = create(&cfg.out.join("profile.csv"))?;
    prof.write_csv(&mut csv)?;
    csv.flush()?;
    write_json(&cfg.out.join("profile.json"), &prof.sidecar())?;
    let failures = profile_failures(&check, cfg);
    let report = ProfileReport {
        p,
        k: cfg.k,
        kind: prof.kind,
        theta0: prof.theta0,
        theta0_closed_form: theta0_closed_form(p, cfg.k)?,
        contact_rays: prof.contact_rays.clone(),
        check,
        passed: failures.is_empty(),
        failures,
    };
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(if report.passed {
        Status::Success
    } else {
        Status::Failed(report.failures.join("; "))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub k: u32,
    pub theta0: f64,
    pub admissible: Option<SolutionKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per `k = 1, 2, 3`: `theta0` strictly decreases along the sorted exponents.
    pub monotone_decreasing: [bool; 3],
}

pub fn sweep(cfg: &RunConfig) -> anyhow::Result<Status> {
    let ps = cfg.p.values();
    let rows: Vec<SweepRow> = ps
        .par_iter()
        .flat_map_iter(|&p| {
            (1..=3u32).map(move |k| -> anyhow::Result<SweepRow> {
                let theta0 = theta0_closed_form(p, k)?;
                let admissible = admissible_k(p)?.into_iter().find(|(j, _)| *j == k).map(|(_, kind)| kind);
                Ok(SweepRow { p, k, theta0, admissible })
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let mut monotone = [true; 3];
    for (k, flag) in monotone.iter_mut().enumerate() {
        let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.k == k as u32 + 1).map(|r| (r.p, r.theta0)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        *flag = pts.windows(2).all(|w| w[1].1 < w[0].1);
    }
    prepare_out(cfg)?;
    let mut csv = create(&cfg.out.join("sweep.csv"))?;
    writeln!(csv, "p,k,theta0,admissible")?;
    for r in &rows {
        let label = r.admissible.map_or("none", kind_name);
        writeln!(csv, "{:.16e},{},{:.16e},{label}", r.p, r.k, r.theta0)?;
    }
    csv.flush()?;
    let report = SweepReport { rows, monotone_decreasing: monotone };
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(if monotone.iter().all(|m| *m) {
        Status::Success
    } else {
        Status::Failed("theta0 is not monotone in p".into())
    })
}

fn problem(cfg: &RunConfig, p: f64) -> anyhow::Result<ProblemSpec> {
    let obstacle = Obstacle::from_spec(&cfg.obstacle)?;
    let spec = match &cfg.boundary {
        BoundarySpec::Profile => {
            let prof = Arc::new(load_profile(p, cfg.k, cfg.n_grid)?);
            ProblemSpec::new(p, obstacle, move |x| prof.u_eval(x), cfg.domain)?
        }
        BoundarySpec::Expression { formula } => {
            let expr = Expr::parse(formula)?;
            ProblemSpec::new(p, obstacle, move |x| expr.eval(&x), cfg.domain)?
        }
    };
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub h: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub converged: bool,
    pub final_epsilon: f64,
    pub stats: SolveStats,
    pub complementarity_residual: f64,
    pub contact_vertices: usize,
    pub contact_area: f64,
    pub contact_fraction: f64,
    pub free_boundary_length: f64,
    pub free_boundary_degenerate: bool,
}

fn solve_report(cfg: &RunConfig, spec: &ProblemSpec, sol: &DiscreteSolution) -> anyhow::Result<SolveReport> {
    let cs = contact_mask(sol, cfg.tolerances.contact_factor)?;
    let fb = extract_free_boundary(&cs);
    Ok(SolveReport {
        p: sol.p,
        h: sol.mesh.h,
        n_vertices: sol.mesh.vertices.len(),
        n_triangles: sol.mesh.triangles.len(),
        converged: sol.converged,
        final_epsilon: sol.final_epsilon,
        stats: sol.stats.clone(),
        complementarity_residual: complementarity_residual(spec, sol)?,
        contact_vertices: cs.contact_count(),
        contact_area: cs.contact_area(),
        contact_fraction: cs.contact_area() / cfg.domain.area(),
        free_boundary_length: fb.total_length,
        free_boundary_degenerate: fb.degenerate,
    })
}

fn write_solution(cfg: &RunConfig, sol: &DiscreteSolution) -> anyhow::Result<()> {
    let mut off = create(&cfg.out.join("mesh.off"))?;
    sol.mesh.write_off(&mut off)?;
    off.flush()?;
    let mut csv = create(&cfg.out.join("solution.csv"))?;
    sol.write_csv(&mut csv, cfg.tolerances.contact_factor)?;
    csv.flush()?;
    let cs = contact_mask(sol, cfg.tolerances.contact_factor)?;
    let mut fb = create(&cfg.out.join("free_boundary.csv"))?;
    extract_free_boundary(&cs).write_csv(&mut fb)?;
    fb.flush()?;
    Ok(())
}

fn not_converged(sol: &DiscreteSolution) -> Status {
    Status::Failed(format!(
        "solver stopped after {} iterations with projected gradient {:e}",
        sol.stats.iterations, sol.stats.final_projected_gradient
    ))
}

pub fn solve_cmd(cfg: &RunConfig) -> anyhow::Result<Status> {
    let p = cfg.p.single()?;
    let spec = problem(cfg, p)?;
    let sol = solve(&spec, &cfg.solver, cfg.h)?;
    prepare_out(cfg)?;
    write_solution(cfg, &sol)?;
    let report = solve_report(cfg, &spec, &sol)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(if sol.converged { Status::Success } else { not_converged(&sol) })
}

/// Diagnostics at one free-boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub seed: [f64; 2],
    pub center: Option<[f64; 2]>,
    pub nondegeneracy: Option<NondegeneracyReport>,
    pub porosity: Option<PorosityReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub angle: Option<AngleEstimate>,
    pub angle_error: Option<String>,
    pub points: Vec<PointDiagnostics>,
    /// Smallest lower growth constant over all points, `None` if a point failed.
    pub c1_lower: Option<f64>,
    pub free_boundary_length: f64,
    pub contact_fraction: f64,
}

fn scan_radii(radius: f64) -> Vec<f64> {
    (1..=8).map(|i| 0.05 * radius * i as f64).collect()
}

fn diagnostics(
    cfg: &RunConfig,
    sol: &DiscreteSolution,
    seeds: &[[f64; 2]],
    barrier: Option<&BarrierResult>,
) -> anyhow::Result<Diagnostics> {
    let cs = contact_mask(sol, cfg.tolerances.contact_factor)?;
    let fb = extract_free_boundary(&cs);
    let field = DiscreteField::new(sol);
    let radius = domain_radius(cfg.domain);
    let (angle, angle_error) = match angle_at_origin(&field, &default_rings(radius, sol.mesh.h)) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let radii = scan_radii(radius);
    let points: Vec<PointDiagnostics> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let center = if i == 0 { Some(seed) } else { fb.nearest_point(seed) };
            let mut d = PointDiagnostics { seed, center, nondegeneracy: None, porosity: None, error: None };
            let Some(c) = center else {
                d.error = Some("no free boundary near the seed".into());
                return d;
            };
            match nondegeneracy_scan(&field, c, &radii, if i == 0 { barrier } else { None }) {
                Ok(r) => d.nondegeneracy = Some(r),
                Err(e) => d.error = Some(e.to_string()),
            }
            let por_radii: Vec<f64> = POROSITY_RADII.iter().map(|r| r * radius).collect();
            match porosity_scan(&fb, &cs, &[c], &por_radii) {
                Ok(r) => d.porosity = Some(r),
                Err(e) => {
                    d.error.get_or_insert(e.to_string());
                }
            }
            d
        })
        .collect();
    let c1_lower = points
        .iter()
        .map(|d| d.nondegeneracy.as_ref().map(|r| r.c1_lower))
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min));
    Ok(Diagnostics {
        angle,
        angle_error,
        points,
        c1_lower,
        free_boundary_length: fb.total_length,
        contact_fraction: cs.contact_area() / cfg.domain.area(),
    })
}

/// Origin first, then points at distance `0.3 R` on the two free-boundary rays.
fn ray_seeds(theta0: f64, radius: f64) -> Vec<[f64; 2]> {
    let r = 0.3 * radius;
    vec![[0.0, 0.0], [r, 0.0], [r * theta0.cos(), r * theta0.sin()]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub p: f64,
    pub k: u32,
    pub theta0: f64,
    pub profile_check: ProfileCheckReport,
    pub solve: SolveReport,
    pub diagnostics: Diagnostics,
    pub angle_deviation: Option<f64>,
    pub concavity: ConcavityReport,
    pub barrier: Option<BarrierResult>,
    pub barrier_error: Option<String>,
    pub passed: bool,
}

pub fn verify(cfg: &RunConfig) -> anyhow::Result<Status> {
    let p = cfg.p.single()?;
    if cfg.obstacle != (ObstacleSpec::Quadratic { a: 0.0, b: 1.0 }) {
        bail!("verify compares against homogeneous solutions and needs the obstacle -|x|^2");
    }
    if !matches!(cfg.domain, Domain::Disk { .. }) {
        bail!("verify runs on a disk domain");
    }
    let prof = Arc::new(load_profile(p, cfg.k, cfg.n_grid)?);
    if prof.kind == SolutionKind::GlobalPharmonic {
        bail!(
            "(p, k) = ({p}, {}): global p-harmonic case, no obstacle contact cone; admissible k for p = {p}: {}",
            cfg.k,
            admissible_list(p)
        );
    }
    let profile_check = check_profile(&prof)?;
    let obstacle = Obstacle::from_spec(&cfg.obstacle)?;
    let pr = prof.clone();
    let spec = ProblemSpec::new(p, obstacle.clone(), move |x| pr.u_eval(x), cfg.domain)?;
    let sol = solve(&spec, &cfg.solver, cfg.h)?;

    let radius = domain_radius(cfg.domain);
    let sample = halton_ball(CONCAVITY_SAMPLE, &[0.0, 0.0], radius, cfg.seed);
    let concavity = concavity_check(&obstacle, p, &sample)?;
    let (barrier, barrier_error) = match barrier_search(&obstacle, p, &[0.0, 0.0], concavity.margin_c0) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let diagnostics = diagnostics(cfg, &sol, &ray_seeds(prof.theta0, radius), barrier.as_ref())?;
    let angle_deviation = diagnostics.angle.as_ref().map(|a| (a.theta_hat - prof.theta0).abs());

    prepare_out(cfg)?;
    write_solution(cfg, &sol)?;
    let mut csv = create(&cfg.out.join("profile.csv"))?;
    prof.write_csv(&mut csv)?;
    csv.flush()?;

    let angle_ok = angle_deviation.is_some_and(|d| d <= cfg.tolerances.angle);
    let growth_ok = diagnostics.c1_lower.is_some_and(|c| c > 0.0);
    let passed = sol.converged && angle_ok && growth_ok;
    let report = VerifyReport {
        p,
        k: cfg.k,
        theta0: prof.theta0,
        profile_check,
        solve: solve_report(cfg, &spec, &sol)?,
        diagnostics,
        angle_deviation,
        concavity,
        barrier,
        barrier_error,
        passed,
    };
    write_json(&cfg.out.join("report.json"), &report)?;
    if passed {
        return Ok(Status::Success);
    }
    if !sol.converged {
        return Ok(not_converged(&sol));
    }
    let mut why = Vec::new();
    if !angle_ok {
        why.push(match angle_deviation {
            Some(d) => format!("angle deviation {d:.3e} exceeds {}", cfg.tolerances.angle),
            None => "angle could not be measured".into(),
        });
    }
    if !growth_ok {
        why.push("quadratic growth lower bound is not positive".into());
    }
    Ok(Status::Failed(why.join("; ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub source: String,
    pub complementarity_residual: f64,
    pub diagnostics: Diagnostics,
}

fn read_solution_csv(path: &Path, mesh: &Mesh) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("x1,x2,u,phi,contact_flag") {
        bail!("{} has an unexpected header", path.display());
    }
    let (mut u, mut phi) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            bail!("{}: line {} has {} columns", path.display(), i + 2, cols.len());
        }
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("{}: bad number '{s}'", path.display()));
        let x = [num(cols[0])?, num(cols[1])?];
        if mesh.vertices.get(i) != Some(&x) {
            bail!("{}: row {} does not match the mesh vertex", path.display(), i + 1);
        }
        u.push(num(cols[2])?);
        phi.push(num(cols[3])?);
    }
    if u.len() != mesh.vertices.len() {
        bail!("{} has {} rows for {} vertices", path.display(), u.len(), mesh.vertices.len());
    }
    Ok((u, phi))
}

/// Rebuilds a `solve` run from its output directory and recomputes the
/// diagnostics without solving again.
pub fn analyze(dir: &Path) -> anyhow::Result<Status> {
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    cfg.validate()?;
    let p = cfg.p.single()?;
    let off = File::open(dir.join("mesh.off")).with_context(|| format!("opening {}", dir.join("mesh.off").display()))?;
    let mut mesh = Mesh::read_off(BufReader::new(off))?;
    mesh.h = cfg.h;
    let (nodal_values, obstacle_values) = read_solution_csv(&dir.join("solution.csv"), &mesh)?;
    let report_path = dir.join("report.json");
    let solved: SolveReport = serde_json::from_str(
        &fs::read_to_string(&report_path).with_context(|| format!("reading {}", report_path.display()))?,
    )
    .with_context(|| format!("parsing {}", report_path.display()))?;
    let spec = problem(&cfg, p)?;
    let sol = DiscreteSolution {
        mesh,
        nodal_values,
        obstacle_values,
        p,
        final_epsilon: solved.final_epsilon,
        stats: solved.stats.clone(),
        converged: solved.converged,
        energy_history: Vec::new(),
    };
    let radius = domain_radius(cfg.domain);
    let seeds = match (&cfg.boundary, cfg.obstacle == ObstacleSpec::default()) {
        (BoundarySpec::Profile, true) => ray_seeds(theta0_closed_form(p, cfg.k)?, radius),
        _ => vec![[0.0, 0.0]],
    };
    let report = AnalysisReport {
        source: dir.display().to_string(),
        complementarity_residual: complementarity_residual(&spec, &sol)?,
        diagnostics: diagnostics(&cfg, &sol, &seeds, None)?,
    };
    write_json(&dir.join("analysis.json"), &report)?;
    Ok(Status::Success)
}
