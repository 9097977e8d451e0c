use std::f64::consts::{PI, TAU};

use plap_core::numerics::{integrate_adaptive, invert_monotone};
use plap_core::profile::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P_LIST: [f64; 7] = [1.1, 1.5, 2.0, 3.0, 5.0, 9.0, 20.0];

fn profile(p: f64, k: u32) -> HomogeneousProfile {
    build_profile(ProfileParams::new(p, k, DEFAULT_N_GRID).unwrap()).unwrap()
}

#[test]
fn quadrature_matches_closed_form_angle() {
    for p in P_LIST {
        for (k, _) in admissible_k(p).unwrap() {
            let q = theta_of_psi(p, -((2 * k - 1) as f64) * PI).unwrap();
            let c = theta0_closed_form(p, k).unwrap();
            assert!((q - c).abs() <= 1e-10, "p={p} k={k}: {q} vs {c}");
        }
    }
}

#[test]
fn theta0_decreases_in_p() {
    for k in 1..=3 {
        let vals: Vec<f64> = (0..200)
            .map(|i| theta0_closed_form(1.0 + 0.01 + 0.25 * i as f64, k).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn closure_identities() {
    for p in P_LIST {
        for (k, kind) in admissible_k(p).unwrap() {
            let prof = profile(p, k);
            let rho_end = *prof.rho_values.last().unwrap();
            assert!((rho_end - 1.0).abs() <= 1e-9, "p={p} k={k}: rho(theta0) = {rho_end}");
            if kind == SolutionKind::GlobalPharmonic {
                let winding = prof.psi_values.last().unwrap() - prof.psi_values[0];
                assert!((winding + 2.0 * k as f64 * PI).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn p9_k3_boundary_defects() {
    let prof = profile(9.0, 3);
    let rep = check_profile(&prof).unwrap();
    for d in rep.bc_defects {
        assert!(d <= 1e-9, "{:?}", rep.bc_defects);
    }
    let winding = prof.psi_values.last().unwrap() - prof.psi_values[0];
    assert!((winding + 6.0 * PI).abs() <= 1e-9);
    assert_eq!(prof.contact_rays.len(), 2);
    for (j, r) in prof.contact_rays.iter().enumerate() {
        assert!((r - TAU * (j + 1) as f64 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn rho_cancels_on_interior_contact_rays() {
    for (p, k) in [(3.0, 2), (9.0, 2), (9.0, 3), (20.0, 2)] {
        let prof = profile(p, k);
        for &ray in &prof.contact_rays {
            // v = rho cos(psi) = -rho on the ray
            let v = prof.v_eval(ray).unwrap();
            assert!((v + 1.0).abs() <= 1e-8, "p={p} k={k} ray {ray}: v = {v}");
        }
    }
}

#[test]
fn phase_never_degenerates() {
    for p in [1.5, 3.0, 9.0] {
        let prof = profile(p, 1);
        for (v, dv) in prof.v_values.iter().zip(&prof.v_prime_values) {
            assert!(4.0 * v * v + dv * dv > 0.0);
        }
        assert!(prof.rho_values.iter().all(|&r| r > 0.0));
    }
}

#[test]
fn symmetry_for_k1() {
    for p in [1.5, 2.0, 3.0, 9.0] {
        let rep = check_profile(&profile(p, 1)).unwrap();
        assert!(rep.symmetry_defect <= 1e-8, "p={p}: {}", rep.symmetry_defect);
        assert!(rep.weak_form_defect.abs() < 1e-6, "p={p}: {}", rep.weak_form_defect);
    }
}

#[test]
fn v_eval_converges_under_refinement() {
    let coarse = profile(3.0, 1);
    let fine = build_profile(ProfileParams::new(3.0, 1, 4 * (DEFAULT_N_GRID - 1) + 1).unwrap()).unwrap();
    let t = coarse.theta0 / 2.0;
    assert!((coarse.v_eval(t).unwrap() - fine.v_eval(t).unwrap()).abs() <= 1e-8);
    assert_eq!(coarse.v_eval(coarse.theta0 + 0.1).unwrap(), -1.0);
    assert!(coarse.v_eval(-0.1).is_err());
    assert!(coarse.v_eval(7.0).is_err());
}

#[test]
fn p2_point_values() {
    let prof = profile(2.0, 1);
    assert!((prof.v_eval(PI / 2.0).unwrap() - 1.0).abs() < 1e-9);
    assert!((prof.u_eval([0.0, 1.0]) - 1.0).abs() < 1e-9);
    assert_eq!(prof.u_eval([0.0, 0.0]), 0.0);
}

#[test]
fn u_is_two_homogeneous_and_above_obstacle() {
    let prof = profile(3.0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let u1 = prof.u_eval(x);
        let u2 = prof.u_eval([2.0 * x[0], 2.0 * x[1]]);
        assert!((u2 - 4.0 * u1).abs() <= 1e-12 * (1.0 + u2.abs()));
    }
    for _ in 0..10_000 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let r2 = x[0] * x[0] + x[1] * x[1];
        let gap = prof.u_eval(x) + r2;
        assert!(gap >= -1e-12, "{x:?}: {gap}");
        let t = polar_angle(x);
        if t >= prof.theta0 {
            assert!(gap.abs() <= 1e-12);
        } else if t > 1e-3 && t < prof.theta0 - 1e-3 {
            assert!(gap > 0.0);
        }
    }
}

#[test]
fn p3_profile_is_not_convex() {
    let prof = profile(3.0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let found = (0..10_000).any(|_| {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let m = [(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0];
        prof.u_eval(m) > (prof.u_eval(x) + prof.u_eval(y)) / 2.0 + 1e-6
    });
    assert!(found);
}

proptest! {
    #[test]
    fn integrand_bounded_below(p in 1.0001f64..60.0, psi in -7.0 * PI..PI) {
        let f = fp_eval(p, psi).unwrap();
        let c = psi.cos();
        prop_assert!(1.0 + c * c * f >= 0.5);
        prop_assert!(f > 0.0);
    }

    #[test]
    fn theta_of_psi_decreasing(p in 1.05f64..30.0, a in -5.0 * PI..PI, b in -5.0 * PI..PI) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(theta_of_psi(p, lo).unwrap() > theta_of_psi(p, hi).unwrap());
    }

    #[test]
    fn quadrature_bounds_polynomial_error(coeffs in proptest::collection::vec(-5.0f64..5.0, 1..=10), a in -2.0f64..0.0, b in 0.1f64..2.0) {
        let f = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let exact: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * (b.powi(i as i32 + 1) - a.powi(i as i32 + 1)) / (i as f64 + 1.0))
            .sum();
        let res = integrate_adaptive(f, a, b, 1e-10).unwrap();
        let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>() * 2f64.powi(coeffs.len() as i32) * (b - a);
        prop_assert!((res.value - exact).abs() <= res.error_estimate + 64.0 * f64::EPSILON * scale);
    }

    #[test]
    fn inversion_is_identity(c3 in 0.0f64..2.0, c1 in 0.1f64..3.0, c0 in -1.0f64..1.0, x in -1.9f64..1.9) {
        let f = |t: f64| c3 * t * t * t + c1 * t + c0;
        let y = f(x);
        let back = invert_monotone(f, y, -2.0, 2.0, 1e-12).unwrap();
        prop_assert!((back - x).abs() <= 1e-10);
    }
}
