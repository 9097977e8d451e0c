//! Two-homogeneous solutions `u = r^2 v(theta)` of the p-Laplacian obstacle
//! problem with obstacle `-|x|^2` in the plane.
//!
//! The angular profile is written in phase variables `v = rho cos(psi)`,
//! `v' = rho sin(psi)`. Then `psi` solves the autonomous equation
//! `psi' = -(1 + cos^2(psi) F_p(psi))` and `rho` follows by a quadrature, so
//! the whole profile reduces to one-dimensional integrals in `psi`:
//!
//! * `Theta(psi) = int_psi^pi dsigma / (1 + cos^2 F_p)` is the angle at which
//!   the phase reaches `psi`, and `psi(theta)` is its inverse;
//! * `log rho(theta) = -int_{psi(theta)}^pi cos sin F_p / (1 + cos^2 F_p)`.
//!
//! The contact cone is `theta in [theta0, 2 pi]` with
//! `theta0 = 2 k pi (1 - sqrt((p-1)/(2p)))`, the angle at which `psi`
//! reaches `-(2k-1) pi`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_exponent, Error, Result};
use crate::numerics::{fd_derivative, integrate_adaptive, invert_monotone_with_slope, HermiteTable};

/// Absolute tolerance of every `Theta` and `log rho` quadrature.
pub const QUADRATURE_TOL: f64 = 1e-12;
/// Tolerance of the `Theta` inversion, in units of `theta`.
pub const INVERSION_TOL: f64 = 1e-12;
/// Default table resolution.
pub const DEFAULT_N_GRID: usize = 4097;
/// `theta0` within this distance of `2 pi` is a global p-harmonic case.
pub const GLOBAL_CASE_TOL: f64 = 1e-12;

/// Radial and angular resolution of the polar grid used by the weak-form check.
pub const WEAK_FORM_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    /// `theta0 < 2 pi`: a genuine obstacle-problem solution with a contact cone.
    ObstacleSolution,
    /// `theta0 = 2 pi`: the construction closes up into a p-harmonic function.
    GlobalPharmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub p: f64,
    pub k: u32,
    pub n_grid: usize,
}

impl ProfileParams {
    pub fn new(p: f64, k: u32, n_grid: usize) -> Result<Self> {
        let params = Self { p, k, n_grid };
        params.kind()?;
        Ok(params)
    }

    /// Validates the parameters and classifies the resulting solution.
    pub fn kind(&self) -> Result<SolutionKind> {
        check_exponent(self.p)?;
        if self.n_grid < 3 {
            return Err(Error::InvalidArgument(format!(
                "profile tables need at least 3 points, got {}",
                self.n_grid
            )));
        }
        if !(1..=3).contains(&self.k) {
            return Err(Error::Inadmissible {
                p: self.p,
                k: self.k,
                reason: "the winding index must be 1, 2 or 3".into(),
            });
        }
        classify(self.p, self.k).ok_or_else(|| Error::Inadmissible {
            p: self.p,
            k: self.k,
            reason: format!(
                "theta0 = {} > 2 pi",
                theta0_closed_form(self.p, self.k).unwrap_or(f64::NAN)
            ),
        })
    }
}

fn classify(p: f64, k: u32) -> Option<SolutionKind> {
    let theta0 = theta0_closed_form(p, k).ok()?;
    if (theta0 - TAU).abs() <= GLOBAL_CASE_TOL {
        Some(SolutionKind::GlobalPharmonic)
    } else if theta0 < TAU {
        Some(SolutionKind::ObstacleSolution)
    } else {
        None
    }
}

#[inline]
fn fp_unchecked(p: f64, psi: f64) -> f64 {
    let c2 = psi.cos().powi(2);
    let s2 = psi.sin().powi(2);
    ((8.0 * p - 4.0) * c2 + (5.0 * p - 7.0) * s2) / (4.0 * c2 + (p - 1.0) * s2)
}

/// `1 + cos^2(psi) F_p(psi)`, the rotation speed `-psi'` of the phase angle.
#[inline]
fn phase_speed(p: f64, psi: f64) -> f64 {
    1.0 + psi.cos().powi(2) * fp_unchecked(p, psi)
}

/// `d log(rho) / d(-psi)`: the integrand of the `log rho` quadrature in `psi`.
#[inline]
fn log_rho_rate(p: f64, psi: f64) -> f64 {
    let f = fp_unchecked(p, psi);
    psi.cos() * psi.sin() * f / (1.0 + psi.cos().powi(2) * f)
}

/// `F_p(psi) = ((8p-4) cos^2 + (5p-7) sin^2) / (4 cos^2 + (p-1) sin^2)`.
pub fn fp_eval(p: f64, psi: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(fp_unchecked(p, psi))
}

/// Partial derivative of `F_p(psi)` in `p`.
pub fn fp_dp(p: f64, psi: f64) -> Result<f64> {
    check_exponent(p)?;
    let c2 = psi.cos().powi(2);
    let denom = (5.0 - p) * c2 + p - 1.0;
    Ok((18.0 * c2 * c2 + 12.0 * c2 + 2.0) / (denom * denom))
}

/// Right side of `v'' = -v (8p v^2 + (6p-8) v'^2) / (4 v^2 + (p-1) v'^2)`
/// evaluated at `v = x`, `v' = y`.
pub fn ode_rhs(p: f64, x: f64, y: f64) -> Result<f64> {
    check_exponent(p)?;
    if x == 0.0 && y == 0.0 {
        return Err(Error::InvalidArgument(
            "profile equation is undefined at (v, v') = (0, 0)".into(),
        ));
    }
    Ok(ode_rhs_unchecked(p, x, y))
}

#[inline]
fn ode_rhs_unchecked(p: f64, x: f64, y: f64) -> f64 {
    let (x2, y2) = (x * x, y * y);
    -x * (8.0 * p * x2 + (6.0 * p - 8.0) * y2) / (4.0 * x2 + (p - 1.0) * y2)
}

/// `Theta(psi)`, the angle at which the phase angle has decreased from `pi`
/// to `psi`.
pub fn theta_of_psi(p: f64, psi: f64) -> Result<f64> {
    check_exponent(p)?;
    if !(psi <= PI) {
        return Err(Error::InvalidArgument(format!(
            "phase angle must satisfy psi <= pi, got {psi}"
        )));
    }
    let r = integrate_adaptive(|s| 1.0 / phase_speed(p, s), psi, PI, QUADRATURE_TOL)?;
    Ok(r.value)
}

/// `theta0 = 2 k pi (1 - sqrt((p-1)/(2p)))`.
pub fn theta0_closed_form(p: f64, k: u32) -> Result<f64> {
    check_exponent(p)?;
    if k == 0 {
        return Err(Error::InvalidArgument("winding index k must be >= 1".into()));
    }
    Ok(2.0 * k as f64 * PI * (1.0 - ((p - 1.0) / (2.0 * p)).sqrt()))
}

/// Winding indices that yield a solution for this `p`, with their kind.
pub fn admissible_k(p: f64) -> Result<Vec<(u32, SolutionKind)>> {
    check_exponent(p)?;
    Ok((1..=3).filter_map(|k| classify(p, k).map(|kind| (k, kind))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTolerances {
    pub quadrature: f64,
    pub inversion: f64,
}

impl Default for ProfileTolerances {
    fn default() -> Self {
        Self {
            quadrature: QUADRATURE_TOL,
            inversion: INVERSION_TOL,
        }
    }
}

/// Tabulated angular profile on a uniform grid over `[0, theta0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousProfile {
    pub params: ProfileParams,
    pub kind: SolutionKind,
    pub theta0: f64,
    pub theta_grid: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub v_values: Vec<f64>,
    pub v_prime_values: Vec<f64>,
    /// Interior contact rays, where `psi = -(2j-1) pi` for `j = 1..k-1`.
    pub contact_rays: Vec<f64>,
    pub tolerances: ProfileTolerances,
}

/// Solves the phase system on a uniform `theta` grid.
pub fn build_profile(params: ProfileParams) -> Result<HomogeneousProfile> {
    let kind = params.kind()?;
    let ProfileParams { p, k, n_grid } = params;
    let theta0 = theta0_closed_form(p, k)?;
    let psi_end = -((2 * k - 1) as f64) * PI;
    let step = theta0 / (n_grid - 1) as f64;
    let theta_grid: Vec<f64> = (0..n_grid)
        .map(|i| if i + 1 == n_grid { theta0 } else { i as f64 * step })
        .collect();

    let mut psi_values = Vec::with_capacity(n_grid);
    let mut log_rho = Vec::with_capacity(n_grid);
    psi_values.push(PI);
    log_rho.push(0.0);

    // Theta accumulated node by node; each step is a short, well-resolved integral.
    let mut theta_prev = 0.0;
    let max_speed = 4.0 * p + 4.0;
    for &target in &theta_grid[1..] {
        let psi_prev = *psi_values.last().unwrap();
        let theta_at = |psi: f64| -> f64 {
            theta_prev
                + integrate_adaptive(|s| 1.0 / phase_speed(p, s), psi, psi_prev, QUADRATURE_TOL)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
        };
        let slope = |psi: f64| -1.0 / phase_speed(p, psi);
        let lo = (psi_prev - max_speed * (target - theta_prev)).max(psi_end - 1e-9);
        let psi = invert_monotone_with_slope(theta_at, slope, target, lo, psi_prev, INVERSION_TOL)?;
        let psi = psi.min(psi_prev);
        let increment =
            integrate_adaptive(|s| log_rho_rate(p, s), psi, psi_prev, QUADRATURE_TOL)?.value;
        theta_prev = theta_at(psi);
        log_rho.push(log_rho.last().unwrap() - increment);
        psi_values.push(psi);
    }

    let rho_values: Vec<f64> = log_rho.iter().map(|l| l.exp()).collect();
    let v_values = rho_values
        .iter()
        .zip(&psi_values)
        .map(|(r, s)| r * s.cos())
        .collect();
    let v_prime_values = rho_values
        .iter()
        .zip(&psi_values)
        .map(|(r, s)| r * s.sin())
        .collect();
    let contact_rays = (1..k)
        .map(|j| theta_of_psi(p, -((2 * j - 1) as f64) * PI))
        .collect::<Result<Vec<_>>>()?;

    Ok(HomogeneousProfile {
        params,
        kind,
        theta0,
        theta_grid,
        psi_values,
        rho_values,
        v_values,
        v_prime_values,
        contact_rays,
        tolerances: ProfileTolerances::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCheckReport {
    pub ode_residual_max: f64,
    /// `|v(0)+1|, |v(theta0)+1|, |v'(0)|, |v'(theta0)|`.
    pub bc_defects: [f64; 4],
    pub weak_form_defect: f64,
    pub symmetry_defect: f64,
}

/// One weak-form probe: `flux` is `int |grad u|^{p-2} grad u . grad zeta`,
/// `contact` is `-int_{contact} Delta_p(-r^2) zeta`. They agree for an exact
/// solution, and both are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakFormProbe {
    pub ray: f64,
    pub radial_support: (f64, f64),
    pub half_width: f64,
    pub flux: f64,
    pub contact: f64,
}

fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        let q = 1.0 - s * s;
        (q.powi(4), -8.0 * s * q.powi(3))
    }
}

fn wrap_angle(d: f64) -> f64 {
    (d + PI).rem_euclid(TAU) - PI
}

impl HomogeneousProfile {
    fn table_v(&self) -> HermiteTable<'_> {
        HermiteTable {
            x: &self.theta_grid,
            y: &self.v_values,
            dy: &self.v_prime_values,
        }
    }

    fn check_angle(theta: f64) -> Result<()> {
        if (0.0..=TAU).contains(&theta) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "angle {theta} outside [0, 2 pi]"
            )))
        }
    }

    /// `v(theta)`: cubic Hermite interpolation on `[0, theta0]`, `-1` on the
    /// contact cone.
    pub fn v_eval(&self, theta: f64) -> Result<f64> {
        Self::check_angle(theta)?;
        Ok(self.v_at(theta))
    }

    /// `v'(theta)`, interpolated with the exact slope `v''` from the profile
    /// equation; `0` on the contact cone.
    pub fn v_prime_eval(&self, theta: f64) -> Result<f64> {
        Self::check_angle(theta)?;
        Ok(self.v_prime_at(theta))
    }

    fn v_at(&self, theta: f64) -> f64 {
        if theta > self.theta0 {
            -1.0
        } else {
            self.table_v().eval(theta)
        }
    }

    fn v_prime_at(&self, theta: f64) -> f64 {
        if theta > self.theta0 {
            return 0.0;
        }
        let p = self.params.p;
        let i = match self.theta_grid.partition_point(|&t| t <= theta) {
            0 => 0,
            j if j >= self.theta_grid.len() => self.theta_grid.len() - 2,
            j => j - 1,
        };
        let second = |j: usize| ode_rhs_unchecked(p, self.v_values[j], self.v_prime_values[j]);
        crate::numerics::hermite(
            self.theta_grid[i],
            self.theta_grid[i + 1],
            self.v_prime_values[i],
            self.v_prime_values[i + 1],
            second(i),
            second(i + 1),
            theta,
        )
    }

    /// `u(x) = |x|^2 v(theta)`.
    pub fn u_eval(&self, x: [f64; 2]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return 0.0;
        }
        r2 * self.v_at(polar_angle(x))
    }

    /// Gradient of `u` in Cartesian coordinates.
    pub fn grad_u(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let theta = polar_angle(x);
        let (v, dv) = (self.v_at(theta), self.v_prime_at(theta));
        let (c, s) = (theta.cos(), theta.sin());
        // grad u = 2 r v e_r + r v' e_theta
        [r * (2.0 * v * c - dv * s), r * (2.0 * v * s + dv * c)]
    }

    /// Weak-form probes against the fixed family of bump test functions.
    pub fn weak_form_probes(&self) -> Vec<WeakFormProbe> {
        let mut rays = vec![0.0];
        if self.kind == SolutionKind::ObstacleSolution {
            rays.push(self.theta0);
        }
        rays.extend(self.contact_rays.iter().copied());
        rays.truncate(2);
        if rays.len() < 2 {
            rays.push(self.theta0 / 2.0);
        }
        let supports = [(0.2, 0.6), (0.4, 0.9), (0.25, 1.0)];
        let widths = [0.3, 0.6];
        let mut family = Vec::with_capacity(12);
        for &ray in &rays {
            for &support in &supports {
                for &w in &widths {
                    family.push((ray, support, w));
                }
            }
        }
        family
            .par_iter()
            .map(|&(ray, support, w)| self.weak_form_probe(ray, support, w))
            .collect()
    }

    fn weak_form_probe(&self, ray: f64, (r_lo, r_hi): (f64, f64), w: f64) -> WeakFormProbe {
        let p = self.params.p;
        let n = WEAK_FORM_GRID;
        let dr = (r_hi - r_lo) / n as f64;
        let dt = 2.0 * w / n as f64;
        let rc = 0.5 * (r_lo + r_hi);
        let rw = 0.5 * (r_hi - r_lo);
        let mut flux = crate::numerics::CompensatedSum::default();
        let mut contact = crate::numerics::CompensatedSum::default();
        for j in 0..n {
            let offset = -w + (j as f64 + 0.5) * dt;
            let theta = (ray + offset).rem_euclid(TAU);
            let (tb, dtb) = bump(wrap_angle(theta - ray) / w);
            let dtb = dtb / w;
            let (v, dv) = (self.v_at(theta), self.v_prime_at(theta));
            let speed2 = 4.0 * v * v + dv * dv;
            let in_contact = theta > self.theta0 && self.kind == SolutionKind::ObstacleSolution;
            for i in 0..n {
                let r = r_lo + (i as f64 + 0.5) * dr;
                let (rb, drb) = bump((r - rc) / rw);
                let drb = drb / rw;
                let grad_norm = r * speed2.sqrt();
                let weight = grad_norm.powf(p - 2.0);
                // A . grad zeta with A = |grad u|^{p-2} (2 r v e_r + r v' e_theta)
                let integrand = weight * (2.0 * r * v * drb * tb + dv * rb * dtb);
                flux.add(integrand * r * dr * dt);
                if in_contact {
                    let source = 2f64.powf(p - 1.0) * p * r.powf(p - 2.0);
                    contact.add(source * rb * tb * r * dr * dt);
                }
            }
        }
        WeakFormProbe {
            ray,
            radial_support: (r_lo, r_hi),
            half_width: w,
            flux: flux.value(),
            contact: contact.value(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,psi,rho,v,vprime")?;
        for i in 0..self.theta_grid.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.theta_grid[i],
                self.psi_values[i],
                self.rho_values[i],
                self.v_values[i],
                self.v_prime_values[i]
            )?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            p: self.params.p,
            k: self.params.k,
            theta0: self.theta0,
            n_grid: self.params.n_grid,
            tolerances: self.tolerances,
        }
    }
}

/// JSON sidecar written next to a profile CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSidecar {
    pub p: f64,
    pub k: u32,
    pub theta0: f64,
    pub n_grid: usize,
    pub tolerances: ProfileTolerances,
}

/// Polar angle of `x` in `[0, 2 pi)`.
pub fn polar_angle(x: [f64; 2]) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 {
        t + TAU
    } else {
        t
    }
}

/// Residual, boundary, weak-form and symmetry diagnostics of a profile.
pub fn check_profile(profile: &HomogeneousProfile) -> Result<ProfileCheckReport> {
    let p = profile.params.p;
    let th = &profile.theta_grid;
    let x = &profile.v_values;
    let y = &profile.v_prime_values;
    let dx = fd_derivative(th, x)?;
    let dy = fd_derivative(th, y)?;
    let n = th.len();
    let ode_residual_max = (1..n - 1)
        .map(|i| {
            let rx = (dx[i] - y[i]).abs();
            let ry = (dy[i] - ode_rhs_unchecked(p, x[i], y[i])).abs();
            rx.max(ry)
        })
        .fold(0.0, f64::max);
    let bc_defects = [
        (x[0] + 1.0).abs(),
        (x[n - 1] + 1.0).abs(),
        y[0].abs(),
        y[n - 1].abs(),
    ];
    let weak_form_defect = profile
        .weak_form_probes()
        .iter()
        .map(|probe| (-probe.flux).max(0.0))
        .fold(0.0, f64::max);
    let symmetry_defect = (0..n)
        .map(|i| (x[i] - x[n - 1 - i]).abs())
        .fold(0.0, f64::max);
    Ok(ProfileCheckReport {
        ode_residual_max,
        bc_defects,
        weak_form_defect,
        symmetry_defect,
    })
}
