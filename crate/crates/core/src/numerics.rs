//! Shared numerical kernels: adaptive Gauss-Kronrod quadrature, monotone
//! inversion, finite differences, Hermite interpolation and low-discrepancy
//! sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum bisection depth of a quadrature panel.
pub const MAX_PANEL_DEPTH: u32 = 60;
/// Maximum number of accepted panels before giving up.
pub const PANEL_BUDGET: usize = 1_000_000;

// 15-point Kronrod nodes on [0, 1]; odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

struct Panel {
    value: f64,
    error: f64,
    floor: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs_sum = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    let floor = 4.0 * f64::EPSILON * abs_sum * half.abs();
    Panel {
        value,
        error: error.max(floor),
        floor,
    }
}

/// Adaptive G7-K15 quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Panels are bisected until each meets its share of the tolerance
/// (proportional to its width) or reaches the rounding floor.
pub fn integrate_adaptive<F>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidArgument(format!(
            "quadrature interval [{a}, {b}] must be finite with a <= b"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            panels: 1,
        });
    }

    let width = b - a;
    let mut value = CompensatedSum::default();
    let mut error = 0.0;
    let mut panels = 0usize;
    let mut unresolved = false;
    let mut stack = vec![(a, b, 0u32, gk15(&f, a, b))];

    while let Some((lo, hi, depth, panel)) = stack.pop() {
        let local_tol = tol * (hi - lo) / width;
        let settled = panel.error <= local_tol || panel.error <= panel.floor;
        if settled || depth >= MAX_PANEL_DEPTH {
            if !settled {
                unresolved = true;
            }
            value.add(panel.value);
            error += panel.error;
            panels += 1;
            if panels > PANEL_BUDGET {
                return Err(Error::QuadratureNotConverged {
                    value: value.value(),
                    error_estimate: error,
                    panels,
                    tol,
                });
            }
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let right = gk15(&f, mid, hi);
        let left = gk15(&f, lo, mid);
        stack.push((mid, hi, depth + 1, right));
        stack.push((lo, mid, depth + 1, left));
    }

    let result = QuadratureResult {
        value: value.value(),
        error_estimate: error,
        panels,
    };
    if unresolved || !result.value.is_finite() {
        return Err(Error::QuadratureNotConverged {
            value: result.value,
            error_estimate: result.error_estimate,
            panels,
            tol,
        });
    }
    Ok(result)
}

fn bracket<F: Fn(f64) -> f64>(f: &F, target: f64, lo: f64, hi: f64) -> Result<(f64, f64, f64, f64)> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let f_lo = f(lo) - target;
    let f_hi = f(hi) - target;
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo * f_hi > 0.0 {
        return Err(Error::NotBracketed {
            target,
            lo,
            hi,
            f_lo: f_lo + target,
            f_hi: f_hi + target,
        });
    }
    Ok((lo, hi, f_lo, f_hi))
}

/// Solve `f(x) = target` for strictly monotone `f` on a bracket.
///
/// Either bracket orientation and either monotonicity direction is accepted.
/// Uses Illinois-modified regula falsi with a bisection fallback; returns `x`
/// with `|f(x) - target| <= tol * (1 + |target|)` unless the bracket has
/// collapsed to adjacent floats first.
pub fn invert_monotone<F>(f: F, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b, mut fa, mut fb) = bracket(&f, target, lo, hi)?;
    let goal = tol * (1.0 + target.abs());
    if fa.abs() <= goal {
        return Ok(a);
    }
    if fb.abs() <= goal {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..400 {
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x) - target;
        if fx.abs() <= goal || (b - a) <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(x);
        }
        if fx * fa > 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// As [`invert_monotone`], but Newton steps use the exact slope `df`, falling
/// back to bisection whenever a step leaves the current bracket.
pub fn invert_monotone_with_slope<F, D>(
    f: F,
    df: D,
    target: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b, fa, _) = bracket(&f, target, lo, hi)?;
    let increasing_left = fa < 0.0;
    let goal = tol * (1.0 + target.abs());
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx.abs() <= goal {
            return Ok(x);
        }
        // shrink the bracket around the root
        if (fx < 0.0) == increasing_left {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(x);
        }
        let slope = df(x);
        let newton = x - fx / slope;
        x = if slope != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
    }
    Ok(x)
}

/// Second-order finite-difference derivative of tabulated data.
///
/// Centered three-point differences in the interior and one-sided
/// three-point differences at both ends; non-uniform spacing is supported.
pub fn fd_derivative(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "finite differences need at least 3 aligned points, got x: {}, y: {}",
            x.len(),
            y.len()
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "finite-difference abscissae must be strictly increasing".into(),
        ));
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        d[i] = (-h1 / (h0 * (h0 + h1))) * y[i - 1]
            + ((h1 - h0) / (h0 * h1)) * y[i]
            + (h0 / (h1 * (h0 + h1))) * y[i + 1];
    }
    // one-sided three-point formulas at the ends
    {
        let h0 = x[1] - x[0];
        let h1 = x[2] - x[1];
        d[0] = (-(2.0 * h0 + h1) / (h0 * (h0 + h1))) * y[0]
            + ((h0 + h1) / (h0 * h1)) * y[1]
            + (-h0 / (h1 * (h0 + h1))) * y[2];
    }
    {
        let h0 = x[n - 2] - x[n - 3];
        let h1 = x[n - 1] - x[n - 2];
        d[n - 1] = (h1 / (h0 * (h0 + h1))) * y[n - 3]
            + (-(h0 + h1) / (h0 * h1)) * y[n - 2]
            + ((2.0 * h1 + h0) / (h1 * (h0 + h1))) * y[n - 1];
    }
    Ok(d)
}

/// Cubic Hermite interpolation on one interval.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Value and slope table on a strictly increasing grid, evaluated by
/// piecewise cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteTable<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub dy: &'a [f64],
}

impl HermiteTable<'_> {
    /// `x` must lie within the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            j if j >= n => n - 2,
            j => j - 1,
        };
        hermite(
            self.x[i],
            self.x[i + 1],
            self.y[i],
            self.y[i + 1],
            self.dy[i],
            self.dy[i + 1],
            x,
        )
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// `count` Halton points in the unit cube `[0,1)^dim`, skipping the first
/// `seed + 1` indices.
pub fn halton(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    (0..count as u64)
        .map(|i| {
            PRIMES[..dim]
                .iter()
                .map(|&b| radical_inverse(i + seed + 1, b))
                .collect()
        })
        .collect()
}

/// Deterministic low-discrepancy points in the closed ball `B_radius(centre)`,
/// by rejection from the enclosing cube.
pub fn halton_ball(count: usize, centre: &[f64], radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let dim = centre.len();
    let mut out = Vec::with_capacity(count);
    let mut index = seed;
    while out.len() < count {
        let chunk = halton(count.max(64), dim, index);
        index += chunk.len() as u64;
        for u in chunk {
            let y: Vec<f64> = u.iter().map(|&t| 2.0 * t - 1.0).collect();
            if y.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                out.push(
                    y.iter()
                        .zip(centre)
                        .map(|(&v, &c)| c + radius * v)
                        .collect(),
                );
                if out.len() == count {
                    break;
                }
            }
        }
    }
    out
}

/// Ordinary least-squares line `y = intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() == 1 {
        return (y[0], 0.0);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}
