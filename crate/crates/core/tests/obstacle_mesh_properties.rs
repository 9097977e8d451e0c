use nalgebra::{DMatrix, DVector};
use plap_core::mesh::{build_mesh, Domain};
use plap_core::numerics::halton_ball;
use plap_core::obstacle::*;
use proptest::prelude::*;

fn radial(c: f64) -> Obstacle {
    // phi = -|x|^2 - |x|^4 / 4 + c
    Obstacle::custom(
        2,
        move |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            c - r2 - r2 * r2 / 4.0
        },
        |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            DVector::from_vec(vec![-(2.0 + r2) * x[0], -(2.0 + r2) * x[1]])
        },
        |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let mut h = DMatrix::from_diagonal_element(2, 2, -(2.0 + r2));
            for i in 0..2 {
                for j in 0..2 {
                    h[(i, j)] -= 2.0 * x[i] * x[j];
                }
            }
            h
        },
    )
    .unwrap()
}

#[test]
fn quadratic_margin_example() {
    let sample = halton_ball(10_000, &[0.0, 0.0], 1.0, 3);
    for p in [1.5, 2.0, 3.0] {
        let rep = concavity_check(&Obstacle::quadratic(2, 0.0, 1.0).unwrap(), p, &sample).unwrap();
        assert!((rep.margin_c0 - 2.0 * p).abs() <= 1e-9);
    }
}

#[test]
fn gradients_consistent_with_values() {
    let phi = radial(0.3);
    for x in halton_ball(200, &[0.0, 0.0], 1.0, 1) {
        let g = phi.gradient(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (phi.value(&a) - phi.value(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()));
        }
        let hs = phi.hessian(&x);
        assert!((hs[(0, 1)] - hs[(1, 0)]).abs() <= 1e-10);
    }
}

proptest! {
    #[test]
    fn quadratic_margin_is_closed_form(b in 0.1f64..5.0, a in -3.0f64..3.0, p in 1.05f64..10.0, n in 2usize..=4, seed in 0u64..1000) {
        let phi = Obstacle::quadratic(n, a, b).unwrap();
        let sample = halton_ball(300, &vec![0.0; n], 1.0, seed);
        let rep = concavity_check(&phi, p, &sample).unwrap();
        prop_assert!((rep.margin_c0 - 2.0 * b * (n as f64 + p - 2.0)).abs() <= 1e-9);
    }

    #[test]
    fn operator_invariant_under_constants_and_rotations(
        c in -5.0f64..5.0, angle in 0.0f64..std::f64::consts::TAU, p in 1.1f64..8.0,
        x0 in -1.0f64..1.0, x1 in -1.0f64..1.0,
    ) {
        prop_assume!(x0.hypot(x1) > 1e-3);
        let base = normalized_p_laplacian(&radial(0.0), p, &[x0, x1]).unwrap();
        let shifted = normalized_p_laplacian(&radial(c), p, &[x0, x1]).unwrap();
        let (s, co) = angle.sin_cos();
        let rotated = normalized_p_laplacian(&radial(0.0), p, &[co * x0 - s * x1, s * x0 + co * x1]).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-9);
        prop_assert!((base - rotated).abs() <= 1e-9);
    }

    #[test]
    fn hessian_bound_monotone_in_c0(c0 in 0.01f64..20.0, shrink in 0.001f64..1.0, p in 1.1f64..6.0) {
        let sample = halton_ball(100, &[0.0, 0.0], 1.0, 0);
        let phi = radial(0.0);
        let at = hessian_bound_check(&phi, p, c0, &sample).unwrap();
        if at.holds {
            prop_assert!(hessian_bound_check(&phi, p, c0 * shrink, &sample).unwrap().holds);
        }
    }

    #[test]
    fn mesh_invariants(h in 0.02f64..0.3, side in 0.5f64..3.0, disk in any::<bool>()) {
        let domain = if disk { Domain::Disk { radius: side / 2.0 } } else { Domain::Square { side } };
        if let Ok(m) = build_mesh(domain, h * side) {
            m.validate().unwrap();
            prop_assert!(m.min_angle() >= 20f64.to_radians());
            let total: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
            prop_assert!(total <= domain.area() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn barrier_certificate_survives_denser_sample() {
    for (phi, p, c0) in [
        (Obstacle::quadratic(2, 0.0, 1.0).unwrap(), 3.0, 6.0),
        (Obstacle::quadratic(2, 1.0, 0.5).unwrap(), 1.5, 1.0),
        (radial(0.0), 2.0, 2.0),
    ] {
        let res = barrier_search(&phi, p, &[0.0, 0.0], c0).unwrap();
        let dense = barrier_sample(&[0.0, 0.0], res.delta, 4);
        assert_eq!(dense.len(), 16 * res.certificate_points.len());
        let max = barrier_operator_max(&phi, p, &[0.0, 0.0], res.epsilon, &dense).unwrap();
        assert!(max <= 0.0, "{max}");
    }
}
