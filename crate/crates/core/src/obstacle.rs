//! Obstacles with first and second derivatives, the concavity condition
//! `|grad phi|^{2-p} Delta_p phi <= -c0`, and the barrier construction
//! `phi + eps |x - x0|^2 / 2` used for nondegeneracy.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numerics::halton_ball;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Samples used by [`barrier_search`] to certify one `(eps, delta)` pair.
pub const BARRIER_RADII: usize = 24;
pub const BARRIER_ANGLES: usize = 64;
/// Size of the neighbourhood sample for the concavity precondition.
pub const NEIGHBOURHOOD_SAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BuiltinQuadratic { a: f64, b: f64 },
    BuiltinCustom,
    FiniteDifferenceWrapped,
}

/// Obstacle specification as accepted in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSpec {
    Quadratic { a: f64, b: f64 },
    Expression { formula: String },
}

impl Default for ObstacleSpec {
    fn default() -> Self {
        ObstacleSpec::Quadratic { a: 0.0, b: 1.0 }
    }
}

#[derive(Clone)]
pub struct Obstacle {
    dim: usize,
    value: ScalarFn,
    gradient: GradientFn,
    hessian: HessianFn,
    provenance: Provenance,
}

impl fmt::Debug for Obstacle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Obstacle")
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "obstacle dimension must be at least 2, got {dim}"
        )));
    }
    Ok(())
}

impl Obstacle {
    /// `phi(x) = a - b |x|^2`.
    pub fn quadratic(dim: usize, a: f64, b: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quadratic obstacle needs b > 0, got {b}"
            )));
        }
        Ok(Self {
            dim,
            value: Arc::new(move |x| a - b * x.iter().map(|v| v * v).sum::<f64>()),
            gradient: Arc::new(move |x| DVector::from_iterator(x.len(), x.iter().map(|v| -2.0 * b * v))),
            hessian: Arc::new(move |x| DMatrix::from_diagonal_element(x.len(), x.len(), -2.0 * b)),
            provenance: Provenance::BuiltinQuadratic { a, b },
        })
    }

    /// Obstacle with analytic derivatives supplied by the caller.
    pub fn custom<V, G, H>(dim: usize, value: V, gradient: G, hessian: H) -> Result<Self>
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
        H: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        check_dim(dim)?;
        Ok(Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            provenance: Provenance::BuiltinCustom,
        })
    }

    /// Obstacle from values only; derivatives by central differences with
    /// steps `eps^(1/3) (1 + |x|)` (gradient) and `eps^(1/4) (1 + |x|)` (Hessian).
    pub fn from_value<V>(dim: usize, value: V) -> Result<Self>
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_dim(dim)?;
        let value: ScalarFn = Arc::new(value);
        let gv = value.clone();
        let hv = value.clone();
        Ok(Self {
            dim,
            value,
            gradient: Arc::new(move |x| fd_gradient(gv.as_ref(), x)),
            hessian: Arc::new(move |x| fd_hessian(hv.as_ref(), x)),
            provenance: Provenance::FiniteDifferenceWrapped,
        })
    }

    /// Planar obstacle from a configuration entry.
    pub fn from_spec(spec: &ObstacleSpec) -> Result<Self> {
        match spec {
            ObstacleSpec::Quadratic { a, b } => Self::quadratic(2, *a, *b),
            ObstacleSpec::Expression { formula } => {
                let expr = Expr::parse(formula)?;
                if expr.arity() > 2 {
                    return Err(Error::InvalidArgument(format!(
                        "planar obstacle formula may only use x1 and x2: '{formula}'"
                    )));
                }
                Self::from_value(2, move |x| expr.eval(x))
            }
        }
    }

    /// `phi + delta`, keeping the derivatives.
    pub fn raised(&self, delta: f64) -> Self {
        let value = self.value.clone();
        let provenance = match self.provenance {
            Provenance::BuiltinQuadratic { a, b } => Provenance::BuiltinQuadratic { a: a + delta, b },
            ref other => other.clone(),
        };
        Self {
            value: Arc::new(move |x| value(x) + delta),
            provenance,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hessian)(x)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn fd_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> DVector<f64> {
    let h = f64::EPSILON.cbrt() * (1.0 + norm(x));
    let mut y = x.to_vec();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        }),
    )
}

fn fd_hessian(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h = f64::EPSILON.powf(0.25) * (1.0 + norm(x));
    let mut y = x.to_vec();
    let mut at = |di: (usize, f64), dj: (usize, f64)| {
        y.copy_from_slice(x);
        y[di.0] += di.1;
        y[dj.0] += dj.1;
        f(&y)
    };
    let mut m = DMatrix::zeros(n, n);
    let f0 = f(x);
    for i in 0..n {
        let fp = at((i, h), (i, 0.0));
        let fm = at((i, -h), (i, 0.0));
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let v = (at((i, h), (j, h)) - at((i, h), (j, -h)) - at((i, -h), (j, h))
                + at((i, -h), (j, -h)))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `|grad| <= 1e-14 (1 + |x|)` marks a critical point.
pub fn is_critical(grad: &DVector<f64>, x: &[f64]) -> bool {
    grad.norm() <= 1e-14 * (1.0 + norm(x))
}

/// `Delta w + (p - 2) <grad w, D^2 w grad w> / |grad w|^2` from a gradient
/// and Hessian; `None` at critical points.
pub fn normalized_operator(grad: &DVector<f64>, hess: &DMatrix<f64>, p: f64, x: &[f64]) -> Option<f64> {
    if is_critical(grad, x) {
        return None;
    }
    let infinity = grad.dot(&(hess * grad)) / grad.norm_squared();
    Some(hess.trace() + (p - 2.0) * infinity)
}

/// Normalized p-Laplacian `|grad phi|^{2-p} Delta_p phi` of the obstacle at `x`.
pub fn normalized_p_laplacian(obstacle: &Obstacle, p: f64, x: &[f64]) -> Result<f64> {
    crate::error::check_exponent(p)?;
    let grad = obstacle.gradient(x);
    let hess = obstacle.hessian(x);
    normalized_operator(&grad, &hess, p, x).ok_or_else(|| Error::CriticalPoint(x.to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    /// Largest `c0` for which the condition holds on the sample; negative
    /// when violated.
    pub margin_c0: f64,
    pub worst_point: Vec<f64>,
    pub sample_size: usize,
    pub critical_points_skipped: usize,
}

pub fn concavity_check(obstacle: &Obstacle, p: f64, sample: &[Vec<f64>]) -> Result<ConcavityReport> {
    crate::error::check_exponent(p)?;
    if sample.is_empty() {
        return Err(Error::InvalidArgument("concavity check needs a non-empty sample".into()));
    }
    let mut worst: Option<(f64, &Vec<f64>)> = None;
    let mut skipped = 0;
    for x in sample {
        let grad = obstacle.gradient(x);
        let hess = obstacle.hessian(x);
        match normalized_operator(&grad, &hess, p, x) {
            None => skipped += 1,
            Some(v) => {
                if worst.map_or(true, |(w, _)| v > w) {
                    worst = Some((v, x));
                }
            }
        }
    }
    let (value, point) = worst.ok_or(Error::VacuousCondition(sample.len()))?;
    Ok(ConcavityReport {
        margin_c0: -value,
        worst_point: point.clone(),
        sample_size: sample.len(),
        critical_points_skipped: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianBoundCheck {
    pub holds: bool,
    /// `min |D^2 phi| (n + p - 2) / c0` over the sample.
    pub min_ratio: f64,
}

fn operator_norm(h: &DMatrix<f64>) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0, |m: f64, l| m.max(l.abs()))
}

/// Checks `|D^2 phi| >= c0 / (n + p - 2)` in operator norm on the sample.
pub fn hessian_bound_check(
    obstacle: &Obstacle,
    p: f64,
    c0: f64,
    sample: &[Vec<f64>],
) -> Result<HessianBoundCheck> {
    crate::error::check_exponent(p)?;
    if !(c0 > 0.0) {
        return Err(Error::InvalidArgument(format!("c0 must be positive, got {c0}")));
    }
    let scale = (obstacle.dim() as f64 + p - 2.0) / c0;
    let min_ratio = sample
        .iter()
        .map(|x| operator_norm(&obstacle.hessian(x)) * scale)
        .fold(f64::INFINITY, f64::min);
    Ok(HessianBoundCheck {
        holds: min_ratio >= 1.0 - 1e-12,
        min_ratio,
    })
}

/// The eigenvalue-spacing choice `eps = (k + 1/2) t` with no Hessian
/// eigenvalue in `(-(k+1) t, -k t)`, which keeps `|lambda_i + eps| >= eps / (2(n+2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingChoice {
    pub spacing: f64,
    pub k: usize,
    pub epsilon: f64,
    pub eigenvalues: Vec<f64>,
    pub min_gap: f64,
    pub required_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierResult {
    pub epsilon: f64,
    pub delta: f64,
    /// Largest normalized operator value of the perturbed obstacle on the
    /// certificate sample (negative).
    pub max_operator: f64,
    pub certificate_points: Vec<Vec<f64>>,
    pub spacing: Option<SpacingChoice>,
}

/// Dense sample of the closed ball `B_delta(x0)`: a polar grid in the plane,
/// low-discrepancy points otherwise. `density` multiplies the resolution.
pub fn barrier_sample(x0: &[f64], delta: f64, density: usize) -> Vec<Vec<f64>> {
    if x0.len() == 2 {
        let nr = BARRIER_RADII * density;
        let na = BARRIER_ANGLES * density;
        let mut pts = Vec::with_capacity(nr * na);
        for i in 1..=nr {
            let r = delta * i as f64 / nr as f64;
            for j in 0..na {
                let t = std::f64::consts::TAU * (j as f64 + 0.5 * (i % 2) as f64) / na as f64;
                pts.push(vec![x0[0] + r * t.cos(), x0[1] + r * t.sin()]);
            }
        }
        pts
    } else {
        halton_ball(BARRIER_RADII * BARRIER_ANGLES * density * density, x0, delta, 7)
    }
}

/// Largest normalized operator of `phi + eps |x - x0|^2 / 2` over the
/// non-critical points of `sample`; `None` if every point is critical.
pub fn barrier_operator_max(
    obstacle: &Obstacle,
    p: f64,
    x0: &[f64],
    epsilon: f64,
    sample: &[Vec<f64>],
) -> Option<f64> {
    let n = obstacle.dim();
    sample
        .iter()
        .filter_map(|x| {
            let mut grad = obstacle.gradient(x);
            for i in 0..n {
                grad[i] += epsilon * (x[i] - x0[i]);
            }
            let mut hess = obstacle.hessian(x);
            for i in 0..n {
                hess[(i, i)] += epsilon;
            }
            normalized_operator(&grad, &hess, p, x)
        })
        .reduce(f64::max)
}

fn spacing_choice(eigenvalues: Vec<f64>, epsilon: f64) -> Option<SpacingChoice> {
    let n = eigenvalues.len();
    let spacing = epsilon / (n as f64 + 1.0);
    let k = (1..=n + 1).find(|&k| {
        let (lo, hi) = (-((k + 1) as f64) * spacing, -(k as f64) * spacing);
        eigenvalues.iter().all(|&l| !(l > lo && l < hi))
    })?;
    let eps = (k as f64 + 0.5) * spacing;
    let min_gap = eigenvalues
        .iter()
        .map(|l| (l + eps).abs())
        .fold(f64::INFINITY, f64::min);
    Some(SpacingChoice {
        spacing,
        k,
        epsilon: eps,
        eigenvalues,
        min_gap,
        required_gap: eps / (2.0 * (n as f64 + 2.0)),
    })
}

/// Searches `eps in {c0 / 2^m}` and `delta in {2^-m}` (largest first) for a
/// barrier `phi + eps |x - x0|^2 / 2` with non-positive normalized
/// p-Laplacian on `B_delta(x0)`.
///
/// The result is a sampled certificate, not a proof.
pub fn barrier_search(obstacle: &Obstacle, p: f64, x0: &[f64], c0: f64) -> Result<BarrierResult> {
    crate::error::check_exponent(p)?;
    if !(c0 > 0.0) {
        return Err(Error::InvalidArgument(format!("c0 must be positive, got {c0}")));
    }
    if x0.len() != obstacle.dim() {
        return Err(Error::InvalidArgument("x0 has the wrong dimension".into()));
    }
    let g0 = obstacle.gradient(x0);
    if g0.norm() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "barrier centre must be a critical point of the obstacle, |grad phi| = {:e}",
            g0.norm()
        )));
    }
    let neighbourhood = halton_ball(NEIGHBOURHOOD_SAMPLE, x0, 0.5, 11);
    let report = concavity_check(obstacle, p, &neighbourhood)?;
    if report.margin_c0 < c0 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "concavity margin {} near x0 is below c0 = {c0}",
            report.margin_c0
        )));
    }

    let mut best = f64::INFINITY;
    for m_eps in 0..=30 {
        let epsilon = c0 / 2f64.powi(m_eps);
        for m_delta in 0..=20 {
            let delta = 2f64.powi(-m_delta);
            let sample = barrier_sample(x0, delta, 1);
            let Some(max_operator) = barrier_operator_max(obstacle, p, x0, epsilon, &sample) else {
                continue;
            };
            best = best.min(max_operator);
            if max_operator < 0.0 {
                let eig = SymmetricEigen::new(obstacle.hessian(x0)).eigenvalues;
                let spacing = if eig.iter().any(|&l| l > 0.0) {
                    spacing_choice(eig.iter().copied().collect(), epsilon)
                } else {
                    None
                };
                return Ok(BarrierResult {
                    epsilon,
                    delta,
                    max_operator,
                    certificate_points: sample,
                    spacing,
                });
            }
        }
    }
    Err(Error::BarrierExhausted { best_margin: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::halton_ball;

    fn minus_x1_squared() -> Obstacle {
        Obstacle::custom(
            2,
            |x| -x[0] * x[0],
            |x| DVector::from_vec(vec![-2.0 * x[0], 0.0]),
            |_| DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 0.0])),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_operator_closed_form() {
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        for &p in &[1.5, 2.0, 3.0, 7.0] {
            let v = normalized_p_laplacian(&phi, p, &[0.3, -0.2]).unwrap();
            assert!((v + 2.0 * p).abs() < 1e-12);
        }
        let phi3 = Obstacle::quadratic(3, 1.0, 0.5).unwrap();
        let v = normalized_p_laplacian(&phi3, 3.0, &[0.1, 0.2, 0.3]).unwrap();
        assert!((v + 2.0 * 0.5 * 4.0).abs() < 1e-12);
        assert!(matches!(
            normalized_p_laplacian(&phi, 3.0, &[0.0, 0.0]),
            Err(Error::CriticalPoint(_))
        ));
    }

    #[test]
    fn quadratic_matches_divergence_oracle() {
        // div(|grad phi|^{p-2} grad phi) by central differences, then normalized
        let p = 3.0;
        let x = [0.4, 0.25];
        let flux = |y: [f64; 2]| {
            let g = [-2.0 * y[0], -2.0 * y[1]];
            let m = (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p - 2.0);
            [m * g[0], m * g[1]]
        };
        let h = 1e-5;
        let div = (flux([x[0] + h, x[1]])[0] - flux([x[0] - h, x[1]])[0]
            + flux([x[0], x[1] + h])[1]
            - flux([x[0], x[1] - h])[1])
            / (2.0 * h);
        let grad_norm = 2.0 * (x[0] * x[0] + x[1] * x[1]).sqrt();
        let oracle = grad_norm.powf(2.0 - p) * div;
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        assert!((normalized_p_laplacian(&phi, p, &x).unwrap() - oracle).abs() < 1e-6);
        assert!((oracle + 6.0).abs() < 1e-6);
    }

    #[test]
    fn linear_and_one_dimensional_obstacles() {
        let lin = Obstacle::from_spec(&ObstacleSpec::Expression {
            formula: "2*x1 - x2 + 1".into(),
        })
        .unwrap();
        for x in halton_ball(50, &[0.0, 0.0], 1.0, 0) {
            assert!(normalized_p_laplacian(&lin, 3.0, &x).unwrap().abs() < 1e-6);
        }
        let phi = minus_x1_squared();
        for &p in &[1.5, 3.0] {
            let v = normalized_p_laplacian(&phi, p, &[0.5, 0.7]).unwrap();
            assert!((v + 2.0 * (p - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn concavity_reports() {
        let sample = halton_ball(10_000, &[0.0, 0.0], 1.0, 0);
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        let rep = concavity_check(&phi, 3.0, &sample).unwrap();
        assert!((rep.margin_c0 - 6.0).abs() < 1e-9);
        assert_eq!(rep.sample_size, 10_000);

        let convex = Obstacle::from_spec(&ObstacleSpec::Expression {
            formula: "x1^2 + x2^2".into(),
        })
        .unwrap();
        let rep = concavity_check(&convex, 3.0, &sample).unwrap();
        assert!((rep.margin_c0 + 6.0).abs() < 1e-4, "{}", rep.margin_c0);

        let flat = Obstacle::from_spec(&ObstacleSpec::Expression { formula: "3".into() }).unwrap();
        assert!(matches!(
            concavity_check(&flat, 3.0, &sample),
            Err(Error::VacuousCondition(10_000))
        ));
        assert!(concavity_check(&phi, 3.0, &[]).is_err());
    }

    #[test]
    fn hessian_bounds() {
        let sample = halton_ball(500, &[0.0, 0.0], 1.0, 0);
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        let p = 3.0;
        let c = hessian_bound_check(&phi, p, 2.0 * (2.0 + p - 2.0), &sample).unwrap();
        assert!(c.holds && (c.min_ratio - 1.0).abs() < 1e-12);
        let flat = Obstacle::from_spec(&ObstacleSpec::Expression { formula: "1".into() }).unwrap();
        assert!(!hessian_bound_check(&flat, p, 1.0, &sample).unwrap().holds);
        let c = hessian_bound_check(&minus_x1_squared(), 3.0, 4.0, &sample).unwrap();
        assert!(c.holds && (c.min_ratio - 1.5).abs() < 1e-12);
        assert!(hessian_bound_check(&phi, p, 0.0, &sample).is_err());
    }

    #[test]
    fn finite_difference_wrapping_is_consistent() {
        let phi = Obstacle::from_spec(&ObstacleSpec::Expression {
            formula: "-(x1^2 + 2*x2^2) + 0.1*sin(3*x1)*x2".into(),
        })
        .unwrap();
        assert_eq!(phi.provenance(), &Provenance::FiniteDifferenceWrapped);
        for x in halton_ball(100, &[0.0, 0.0], 1.0, 5) {
            let h = phi.hessian(&x);
            assert!((h[(0, 1)] - h[(1, 0)]).abs() < 1e-10);
            let exact_h11 = -2.0 - 0.9 * (3.0 * x[0]).sin() * x[1];
            assert!((h[(0, 0)] - exact_h11).abs() < 1e-5);
            let g = phi.gradient(&x);
            let exact = [-2.0 * x[0] + 0.3 * (3.0 * x[0]).cos() * x[1], -4.0 * x[1] + 0.1 * (3.0 * x[0]).sin()];
            for i in 0..2 {
                assert!((g[i] - exact[i]).abs() <= 1e-5 * (1.0 + exact[i].abs()));
            }
        }
    }

    #[test]
    fn barrier_for_quadratic_obstacle() {
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        let res = barrier_search(&phi, 3.0, &[0.0, 0.0], 6.0).unwrap();
        assert!(res.epsilon >= 0.1 && res.epsilon < 2.0);
        assert_eq!(res.delta, 1.0);
        assert!(res.max_operator < 0.0);
        assert!(res.spacing.is_none());
    }

    #[test]
    fn barrier_for_degenerate_hessian() {
        // D^2 phi(0) = diag(-1, 0), p = 2: Delta(phi + eps|x|^2/2) = -1 + 2 eps
        let phi = Obstacle::from_spec(&ObstacleSpec::Expression {
            formula: "-x1^2/2".into(),
        })
        .unwrap();
        let res = barrier_search(&phi, 2.0, &[0.0, 0.0], 1.0).unwrap();
        assert!(res.epsilon < 0.5);
        for x in barrier_sample(&[0.0, 0.0], res.delta, 4) {
            let h = 1e-4;
            let f = |y: [f64; 2]| -y[0] * y[0] / 2.0 + res.epsilon * (y[0] * y[0] + y[1] * y[1]) / 2.0;
            let lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h])
                + f([x[0], x[1] - h])
                - 4.0 * f([x[0], x[1]]))
                / (h * h);
            assert!(lap < 0.0);
        }
    }

    #[test]
    fn barrier_records_spacing_for_positive_eigenvalue() {
        // D^2 phi(0) = diag(-2, 0.2) still satisfies the concavity condition for p = 3
        let phi = Obstacle::custom(
            2,
            |x| -x[0] * x[0] + 0.1 * x[1] * x[1],
            |x| DVector::from_vec(vec![-2.0 * x[0], 0.2 * x[1]]),
            |_| DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 0.2])),
        )
        .unwrap();
        let res = barrier_search(&phi, 3.0, &[0.0, 0.0], 1.0).unwrap();
        let spacing = res.spacing.expect("positive eigenvalue present");
        assert!(spacing.min_gap >= spacing.required_gap);
        assert!(res.max_operator < 0.0);
    }

    #[test]
    fn barrier_rejects_convex_and_noncritical() {
        let convex = Obstacle::from_spec(&ObstacleSpec::Expression {
            formula: "x1^2 + x2^2".into(),
        })
        .unwrap();
        assert!(barrier_search(&convex, 3.0, &[0.0, 0.0], 1.0).is_err());
        let phi = Obstacle::quadratic(2, 0.0, 1.0).unwrap();
        assert!(barrier_search(&phi, 3.0, &[0.5, 0.0], 1.0).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec: ObstacleSpec = serde_json::from_str(r#"{"kind":"quadratic","a":0.5,"b":2}"#).unwrap();
        assert_eq!(spec, ObstacleSpec::Quadratic { a: 0.5, b: 2.0 });
        let spec: ObstacleSpec =
            serde_json::from_str(r#"{"kind":"expression","formula":"-x1^2-x2^2"}"#).unwrap();
        let phi = Obstacle::from_spec(&spec).unwrap();
        assert_eq!(phi.value(&[1.0, 2.0]), -5.0);
        assert!(serde_json::from_str::<ObstacleSpec>(r#"{"kind":"quadratic","a":0,"b":1,"c":2}"#).is_err());
        assert!(Obstacle::from_spec(&ObstacleSpec::Expression { formula: "x3".into() }).is_err());
        assert!(Obstacle::quadratic(2, 0.0, -1.0).is_err());
    }
}
