//! Contact sets, free-boundary polylines and the growth, angle and porosity
//! diagnostics, for analytic evaluators and discrete solutions alike.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DiscreteSolution, DEFAULT_TOL_FACTOR};
use crate::mesh::{Domain, Locator, Mesh};
use crate::numerics::linear_fit;
use crate::obstacle::{BarrierResult, Obstacle};

/// Gap threshold for analytic evaluators.
pub const ANALYTIC_TOL: f64 = 1e-12;
/// Angle-measurement threshold for discrete solutions, in units of `h^2`.
pub const ANGLE_TOL_FACTOR: f64 = 0.25;
/// Angles sampled per ring.
pub const RING_SAMPLES: usize = 4096;
/// Polar sampling of each ball in [`nondegeneracy_scan`].
pub const BALL_RADII: usize = 128;
pub const BALL_ANGLES: usize = 512;
/// Candidate sub-ball centres per side in [`porosity_scan`].
pub const POROSITY_GRID: usize = 96;

/// Anything that can report `u - phi` at a point.
pub trait GapField: Sync {
    /// `u(x) - phi(x)`, or `None` outside the domain.
    fn gap(&self, x: [f64; 2]) -> Option<f64>;
    /// Level above which a point counts as non-contact in angle and
    /// free-boundary membership tests.
    fn threshold(&self) -> f64;
    /// Mesh size for discrete fields.
    fn mesh_size(&self) -> Option<f64>;
}

/// `u - phi` from closed-form evaluators.
pub struct AnalyticField<'a> {
    pub u: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    pub obstacle: &'a Obstacle,
    pub domain: Option<Domain>,
}

impl GapField for AnalyticField<'_> {
    fn gap(&self, x: [f64; 2]) -> Option<f64> {
        if self.domain.is_some_and(|d| !d.contains(x)) {
            return None;
        }
        Some((self.u)(x) - self.obstacle.value(&x))
    }

    fn threshold(&self) -> f64 {
        ANALYTIC_TOL
    }

    fn mesh_size(&self) -> Option<f64> {
        None
    }
}

/// Piecewise-linear interpolation of the nodal gap `u_h - phi` of a solution.
pub struct DiscreteField<'a> {
    solution: &'a DiscreteSolution,
    locator: Locator<'a>,
    gap: Vec<f64>,
}

impl<'a> DiscreteField<'a> {
    pub fn new(solution: &'a DiscreteSolution) -> Self {
        Self {
            solution,
            locator: solution.mesh.locator(),
            gap: solution.gap(),
        }
    }

    pub fn solution(&self) -> &DiscreteSolution {
        self.solution
    }
}

impl GapField for DiscreteField<'_> {
    fn gap(&self, x: [f64; 2]) -> Option<f64> {
        self.locator.interpolate(&self.gap, x)
    }

    fn threshold(&self) -> f64 {
        ANGLE_TOL_FACTOR * self.solution.mesh.h * self.solution.mesh.h
    }

    fn mesh_size(&self) -> Option<f64> {
        Some(self.solution.mesh.h)
    }
}

#[derive(Debug, Clone)]
pub struct ContactSet<'a> {
    pub mesh: &'a Mesh,
    /// `u - phi` at the vertices.
    pub gap: Vec<f64>,
    /// `gap <= tolerance`.
    pub flags: Vec<bool>,
    pub tolerance: f64,
}

impl<'a> ContactSet<'a> {
    fn from_gap(mesh: &'a Mesh, gap: Vec<f64>, tolerance: f64) -> Self {
        let flags = gap.iter().map(|&g| g <= tolerance).collect();
        Self { mesh, gap, flags, tolerance }
    }

    pub fn contact_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Lumped-mass area of the flagged vertices.
    pub fn contact_area(&self) -> f64 {
        self.mesh
            .lumped_mass()
            .iter()
            .zip(&self.flags)
            .filter(|(_, &f)| f)
            .fold(0.0, |a, (m, _)| a + m)
    }
}

/// Contact set of a discrete solution: `u - phi <= tol_factor h^2`.
pub fn contact_mask(solution: &DiscreteSolution, tol_factor: f64) -> Result<ContactSet<'_>> {
    if !(tol_factor > 0.0) {
        return Err(Error::InvalidArgument(format!("tol_factor must be positive, got {tol_factor}")));
    }
    let h = solution.mesh.h;
    Ok(ContactSet::from_gap(&solution.mesh, solution.gap(), tol_factor * h * h))
}

/// Contact set of an analytic evaluator sampled at the vertices of `mesh`,
/// with tolerance [`ANALYTIC_TOL`].
pub fn contact_mask_analytic<'a>(
    mesh: &'a Mesh,
    u: &(dyn Fn([f64; 2]) -> f64 + Sync),
    obstacle: &Obstacle,
) -> ContactSet<'a> {
    let gap = mesh.vertices.iter().map(|&x| u(x) - obstacle.value(&x)).collect();
    ContactSet::from_gap(mesh, gap, ANALYTIC_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryCurve {
    pub segments: Vec<[[f64; 2]; 2]>,
    pub total_length: f64,
    /// Set when every vertex is in contact and the curve is the domain boundary.
    pub degenerate: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl FreeBoundaryCurve {
    pub fn from_segments(segments: Vec<[[f64; 2]; 2]>, degenerate: bool) -> Self {
        let total_length = segments.iter().map(|s| dist(s[0], s[1])).fold(0.0, |a, b| a + b);
        Self {
            segments,
            total_length,
            degenerate,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment endpoint closest to `seed`.
    pub fn nearest_point(&self, seed: [f64; 2]) -> Option<[f64; 2]> {
        self.segments
            .iter()
            .flat_map(|s| s.iter().copied())
            .min_by(|a, b| dist(*a, seed).total_cmp(&dist(*b, seed)))
    }

    /// Distance from `x` to the nearest segment.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        self.segments
            .iter()
            .map(|s| point_segment_distance(x, s))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x1,y1,x2,y2")?;
        for s in &self.segments {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s[0][0], s[0][1], s[1][0], s[1][1])?;
        }
        Ok(())
    }
}

pub fn point_segment_distance(x: [f64; 2], s: &[[f64; 2]; 2]) -> f64 {
    let d = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((x[0] - s[0][0]) * d[0] + (x[1] - s[0][1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(x, [s[0][0] + t * d[0], s[0][1] + t * d[1]])
}

/// Marching triangles along the level `gap = tolerance`, with linear
/// interpolation on the edges joining contact and non-contact vertices.
pub fn extract_free_boundary(cs: &ContactSet<'_>) -> FreeBoundaryCurve {
    let mesh = cs.mesh;
    if !cs.flags.is_empty() && cs.flags.iter().all(|&f| f) {
        let segments = mesh
            .boundary_edges()
            .into_iter()
            .map(|(a, b)| [mesh.vertices[a], mesh.vertices[b]])
            .collect();
        return FreeBoundaryCurve::from_segments(segments, true);
    }
    let crossing = |a: usize, b: usize| {
        let (ga, gb) = (cs.gap[a], cs.gap[b]);
        let t = ((cs.tolerance - ga) / (gb - ga)).clamp(0.0, 1.0);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };
    let mut segments = Vec::new();
    for tri in &mesh.triangles {
        let f = tri.map(|v| cs.flags[v]);
        let n_contact = f.iter().filter(|&&b| b).count();
        if n_contact == 0 || n_contact == 3 {
            continue;
        }
        let mut pts = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if f[e] != f[(e + 1) % 3] {
                pts.push(crossing(a, b));
            }
        }
        if dist(pts[0], pts[1]) > 0.0 {
            segments.push([pts[0], pts[1]]);
        }
    }
    FreeBoundaryCurve::from_segments(segments, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub theta_hat: f64,
    pub ring_radii: Vec<f64>,
    pub ring_angles: Vec<f64>,
    pub fit_slope: f64,
    /// Rings dropped because they were entirely contact or non-contact.
    pub excluded_radii: Vec<f64>,
}

/// Default rings for a discrete solve on a disk: 64 radii evenly spaced in
/// `[max(5h, 5R/16), 4R/5]`.
pub fn default_rings(radius: f64, h: f64) -> Vec<f64> {
    let lo = (5.0 * h).max(5.0 * radius / 16.0);
    let hi = 0.8 * radius;
    (0..64).map(|j| lo + (hi - lo) * j as f64 / 63.0).collect()
}

/// Angular measure of `{u - phi > threshold}` on rings about the origin,
/// extrapolated to `r = 0` by a least-squares line.
pub fn angle_at_origin(field: &dyn GapField, ring_radii: &[f64]) -> Result<AngleEstimate> {
    if ring_radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument("ring radii must be positive".into()));
    }
    if let Some(h) = field.mesh_size() {
        if let Some(r) = ring_radii.iter().find(|&&r| r < 5.0 * h * (1.0 - 1e-12)) {
            return Err(Error::InvalidArgument(format!("ring radius {r} is below 5h = {}", 5.0 * h)));
        }
    }
    let tol = field.threshold();
    let measures: Vec<Result<usize>> = ring_radii
        .par_iter()
        .map(|&r| {
            let mut count = 0;
            for i in 0..RING_SAMPLES {
                let t = TAU * (i as f64 + 0.5) / RING_SAMPLES as f64;
                let g = field.gap([r * t.cos(), r * t.sin()]).ok_or_else(|| {
                    Error::InvalidArgument(format!("ring radius {r} leaves the domain"))
                })?;
                if g > tol {
                    count += 1;
                }
            }
            Ok(count)
        })
        .collect();
    let (mut radii, mut angles, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for (&r, m) in ring_radii.iter().zip(measures) {
        let m = m?;
        if m == 0 || m == RING_SAMPLES {
            excluded.push(r);
        } else {
            radii.push(r);
            angles.push(TAU * m as f64 / RING_SAMPLES as f64);
        }
    }
    if radii.is_empty() {
        return Err(Error::NoUsableRings);
    }
    let (intercept, slope) = if radii.len() == 1 {
        (angles[0], 0.0)
    } else {
        linear_fit(&radii, &angles)
    };
    Ok(AngleEstimate {
        theta_hat: intercept.clamp(0.0, TAU),
        ring_radii: radii,
        ring_angles: angles,
        fit_slope: slope,
        excluded_radii: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    /// `sup_{B_r(center)} (u - phi) / r^2`.
    pub ratios: Vec<f64>,
    pub c1_lower: f64,
    pub growth_upper: f64,
    /// Barrier `eps` when one was supplied.
    pub barrier_epsilon: Option<f64>,
    /// `c1_lower >= eps / 2` when a barrier was supplied.
    pub barrier_bound_holds: Option<bool>,
}

/// Sup of the gap over `B_r(center)` on a polar grid; points outside the
/// domain are skipped.
pub fn ball_sup(field: &dyn GapField, center: [f64; 2], r: f64) -> f64 {
    let mut best = field.gap(center).unwrap_or(f64::NEG_INFINITY);
    for i in 1..=BALL_RADII {
        let rho = r * i as f64 / BALL_RADII as f64;
        for j in 0..BALL_ANGLES {
            let t = TAU * j as f64 / BALL_ANGLES as f64;
            if let Some(g) = field.gap([center[0] + rho * t.cos(), center[1] + rho * t.sin()]) {
                best = best.max(g);
            }
        }
    }
    best
}

/// Rejects points in `{u > phi}` and points whose small neighbourhood is
/// entirely in contact. Discrete fields accept the level of the default
/// contact tolerance, on which extracted polylines lie.
fn check_free_boundary_point(field: &dyn GapField, center: [f64; 2], probe: f64) -> Result<()> {
    let level = field.mesh_size().map_or(0.0, |h| DEFAULT_TOL_FACTOR * h * h);
    let tol = field.threshold().max(level) * (1.0 + 1e-6);
    let at = field.gap(center).ok_or(Error::NotOnFreeBoundary(center))?;
    if at > tol {
        return Err(Error::NotOnFreeBoundary(center));
    }
    let positive = (0..BALL_ANGLES).any(|j| {
        let t = TAU * j as f64 / BALL_ANGLES as f64;
        [0.5, 1.0].iter().any(|s| {
            let x = [center[0] + s * probe * t.cos(), center[1] + s * probe * t.sin()];
            field.gap(x).is_some_and(|g| g > field.threshold())
        })
    });
    if !positive {
        return Err(Error::NotOnFreeBoundary(center));
    }
    Ok(())
}

/// Quadratic growth ratios `c(r) = sup_{B_r(center)} (u - phi) / r^2`.
pub fn nondegeneracy_scan(
    field: &dyn GapField,
    center: [f64; 2],
    radii: &[f64],
    barrier: Option<&BarrierResult>,
) -> Result<NondegeneracyReport> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be non-empty and positive".into()));
    }
    let r_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let probe = field.mesh_size().map_or(0.5 * r_min, |h| (0.5 * r_min).max(3.0 * h));
    check_free_boundary_point(field, center, probe)?;
    let ratios: Vec<f64> = radii
        .par_iter()
        .map(|&r| (ball_sup(field, center, r) / (r * r)).max(0.0))
        .collect();
    let c1_lower = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let growth_upper = ratios.iter().copied().fold(0.0, f64::max);
    Ok(NondegeneracyReport {
        center,
        radii: radii.to_vec(),
        ratios,
        c1_lower,
        growth_upper,
        barrier_epsilon: barrier.map(|b| b.epsilon),
        barrier_bound_holds: barrier.map(|b| c1_lower >= 0.5 * b.epsilon),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessBall {
    /// Free-boundary point and scale the witness belongs to.
    pub scan_center: [f64; 2],
    pub scan_radius: f64,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorosityReport {
    pub centers: Vec<[f64; 2]>,
    pub best_delta: f64,
    pub witnesses: Vec<WitnessBall>,
    /// No free boundary to test.
    pub vacuous: bool,
}

/// For every centre and radius, the largest `delta` on a candidate grid such
/// that `B_{delta r}(x) ⊂ B_r(center)` misses every segment; `best_delta` is
/// the minimum over all pairs. Candidate centres must lie in the mesh.
pub fn porosity_scan(
    fb: &FreeBoundaryCurve,
    cs: &ContactSet<'_>,
    centers: &[[f64; 2]],
    radii: &[f64],
) -> Result<PorosityReport> {
    if fb.is_empty() {
        return Ok(PorosityReport {
            centers: centers.to_vec(),
            best_delta: 1.0,
            witnesses: Vec::new(),
            vacuous: true,
        });
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let locator = cs.mesh.locator();
    let pairs: Vec<([f64; 2], f64)> = centers
        .iter()
        .flat_map(|&c| radii.iter().map(move |&r| (c, r)))
        .collect();
    let witnesses: Vec<WitnessBall> = pairs
        .par_iter()
        .map(|&(x0, r)| {
            let near: Vec<[[f64; 2]; 2]> = fb
                .segments
                .iter()
                .filter(|s| point_segment_distance(x0, s) <= r)
                .copied()
                .collect();
            let mut best = (0.0, x0);
            let n = POROSITY_GRID;
            for iy in 0..=n {
                for ix in 0..=n {
                    let c = [
                        x0[0] - r + 2.0 * r * ix as f64 / n as f64,
                        x0[1] - r + 2.0 * r * iy as f64 / n as f64,
                    ];
                    let room = r - dist(c, x0);
                    if room <= best.0 || locator.locate(c).is_none() {
                        continue;
                    }
                    let clear = near
                        .iter()
                        .map(|s| point_segment_distance(c, s))
                        .fold(f64::INFINITY, f64::min);
                    let rad = room.min(clear);
                    if rad > best.0 {
                        best = (rad, c);
                    }
                }
            }
            WitnessBall {
                scan_center: x0,
                scan_radius: r,
                center: best.1,
                radius: best.0,
            }
        })
        .collect();
    let best_delta = witnesses
        .iter()
        .map(|w| w.radius / w.scan_radius)
        .fold(1.0, f64::min);
    Ok(PorosityReport {
        centers: centers.to_vec(),
        best_delta,
        witnesses,
        vacuous: false,
    })
}
