use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use plap_core::fem::*;
use plap_core::mesh::{build_mesh, Domain, Mesh};
use plap_core::obstacle::Obstacle;
use plap_core::profile::{build_profile, HomogeneousProfile, ProfileParams, DEFAULT_N_GRID};

const DISK: Domain = Domain::Disk { radius: 1.0 };

fn p2_profile() -> Arc<HomogeneousProfile> {
    Arc::new(build_profile(ProfileParams::new(2.0, 1, DEFAULT_N_GRID).unwrap()).unwrap())
}

fn half_disk_spec() -> ProblemSpec {
    let prof = p2_profile();
    ProblemSpec::new(2.0, Obstacle::quadratic(2, 0.0, 1.0).unwrap(), move |x| prof.u_eval(x), DISK).unwrap()
}

/// Independent assembly of `K_ij = int grad phi_i . grad phi_j`.
fn stiffness(mesh: &Mesh) -> Vec<Vec<(usize, f64)>> {
    let n = mesh.vertices.len();
    let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = mesh.triangle_points(t);
        let area = mesh.area(t);
        let e = [[c[0] - b[0], c[1] - b[1]], [a[0] - c[0], a[1] - c[1]], [b[0] - a[0], b[1] - a[1]]];
        for i in 0..3 {
            for j in 0..3 {
                *rows[tri[i]].entry(tri[j]).or_insert(0.0) += (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (4.0 * area);
            }
        }
    }
    rows.into_iter().map(|r| r.into_iter().collect()).collect()
}

fn boundary_and_obstacle(spec: &ProblemSpec, mesh: &Mesh) -> (Vec<f64>, Vec<f64>) {
    let phi: Vec<f64> = mesh.vertices.iter().map(|&x| spec.phi(x)).collect();
    let mut v = phi.clone();
    for i in 0..mesh.vertices.len() {
        if mesh.boundary_flags[i] {
            v[i] = spec.g(mesh.vertices[i]);
        }
    }
    (v, phi)
}

/// Projected SOR for `K v >= 0, v >= phi, (K v)(v - phi) = 0`.
fn psor(spec: &ProblemSpec, mesh: &Mesh) -> Vec<f64> {
    let k = stiffness(mesh);
    let (mut v, phi) = boundary_and_obstacle(spec, mesh);
    let omega = 1.9;
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for i in 0..v.len() {
            if mesh.boundary_flags[i] {
                continue;
            }
            let (mut s, mut d) = (0.0, 0.0);
            for &(j, kij) in &k[i] {
                if j == i {
                    d = kij;
                } else {
                    s += kij * v[j];
                }
            }
            let new = (v[i] + omega * (-s / d - v[i])).max(phi[i]);
            change = change.max((new - v[i]).abs());
            v[i] = new;
        }
        if change < 1e-14 {
            return v;
        }
    }
    panic!("PSOR did not converge");
}

/// Primal-dual active-set solve of the same complementarity problem with
/// dense linear algebra.
fn active_set(spec: &ProblemSpec, mesh: &Mesh) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.vertices.len();
    let k = stiffness(mesh);
    let (g, phi) = boundary_and_obstacle(spec, mesh);
    let mut lambda = vec![0.0; n];
    let mut v = g.clone();
    let mut active = vec![false; n];
    for _ in 0..100 {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for i in 0..n {
            if mesh.boundary_flags[i] {
                a[(i, i)] = 1.0;
                b[i] = g[i];
            } else if active[i] {
                a[(i, i)] = 1.0;
                b[i] = phi[i];
            } else {
                for &(j, kij) in &k[i] {
                    a[(i, j)] = kij;
                }
            }
        }
        let sol = a.lu().solve(&b).unwrap();
        v = sol.iter().copied().collect();
        for i in 0..n {
            lambda[i] = k[i].iter().map(|&(j, kij)| kij * v[j]).sum();
        }
        let next: Vec<bool> = (0..n)
            .map(|i| !mesh.boundary_flags[i] && lambda[i] - (v[i] - phi[i]) > 0.0)
            .collect();
        if next == active {
            break;
        }
        active = next;
    }
    (v, lambda)
}

#[test]
fn p2_matches_projected_sor() {
    let spec = half_disk_spec();
    let mesh = build_mesh(DISK, 1.0 / 16.0).unwrap();
    let reference = psor(&spec, &mesh);
    let sol = solve_on_mesh(&spec, &SolverConfig::default(), mesh).unwrap();
    assert!(sol.converged);
    let err = sol
        .nodal_values
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn p2_satisfies_discrete_kkt() {
    let spec = half_disk_spec();
    let mesh = build_mesh(DISK, 1.0 / 8.0).unwrap();
    let (reference, lambda) = active_set(&spec, &mesh);
    let phi: Vec<f64> = mesh.vertices.iter().map(|&x| spec.phi(x)).collect();
    for i in 0..mesh.vertices.len() {
        if !mesh.boundary_flags[i] {
            assert!(reference[i] >= phi[i] - 1e-12);
            assert!(lambda[i] >= -1e-10);
            assert!((lambda[i] * (reference[i] - phi[i])).abs() <= 1e-10);
        }
    }
    let sol = solve_on_mesh(&spec, &SolverConfig::default(), mesh).unwrap();
    let err = sol
        .nodal_values
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");

    let cfg = SolverConfig::default();
    let sol = solve(&spec, &cfg, 1.0 / 32.0).unwrap();
    assert!(complementarity_residual(&spec, &sol).unwrap() <= 10.0 * cfg.tol);
}

#[test]
fn solution_invariants() {
    for p in [1.5, 3.0] {
        let spec = ProblemSpec::new(
            p,
            Obstacle::quadratic(2, 0.3, 2.0).unwrap(),
            |x| 0.1 * x[0],
            Domain::Square { side: 2.0 },
        )
        .unwrap();
        let sol = solve(&spec, &SolverConfig::default(), 1.0 / 16.0).unwrap();
        assert!(sol.converged);
        assert!(sol.energy_history.windows(2).all(|w| w[1] <= w[0]));
        for (i, x) in sol.mesh.vertices.iter().enumerate() {
            assert!(sol.nodal_values[i] >= spec.phi(*x) - 1e-12);
            if sol.mesh.boundary_flags[i] {
                assert_eq!(sol.nodal_values[i], spec.g(*x));
            }
        }
    }
}

#[test]
fn raising_the_obstacle_never_lowers_the_solution() {
    for p in [1.5, 2.0, 3.0] {
        let make = |a: f64| {
            ProblemSpec::new(p, Obstacle::quadratic(2, a, 3.0).unwrap(), |_| 1.0, DISK).unwrap()
        };
        let low = solve(&make(0.8), &SolverConfig::default(), 1.0 / 8.0).unwrap();
        let high = solve(&make(0.9), &SolverConfig::default(), 1.0 / 8.0).unwrap();
        assert!(low.converged && high.converged);
        for (a, b) in high.nodal_values.iter().zip(&low.nodal_values) {
            assert!(*a >= b - 1e-8, "p={p}: {a} < {b}");
        }
    }
}

#[test]
fn p2_error_decreases_under_refinement() {
    let prof = p2_profile();
    let spec = half_disk_spec();
    let errors: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|n| {
            let sol = solve(&spec, &SolverConfig::default(), 1.0 / n).unwrap();
            sol.mesh
                .vertices
                .iter()
                .zip(&sol.nodal_values)
                .map(|(x, u)| (u - prof.u_eval(*x)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn assembly_is_bit_stable_across_thread_counts() {
    let spec = half_disk_spec();
    let mesh = build_mesh(DISK, 1.0 / 64.0).unwrap();
    let v: Vec<f64> = mesh.vertices.iter().map(|x| (5.0 * x[0]).sin() * x[1]).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                energy(&spec, &mesh, &v, 1e-3).unwrap(),
                energy_gradient(&spec, &mesh, &v, 1e-3).unwrap(),
            )
        })
    };
    let (e1, g1) = run(1);
    let (e4, g4) = run(4);
    assert_eq!(e1.to_bits(), e4.to_bits());
    assert!(g1.iter().zip(&g4).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn outputs_serialize() {
    let spec = half_disk_spec();
    let sol = solve(&spec, &SolverConfig::default(), 1.0 / 8.0).unwrap();
    let mut csv = Vec::new();
    sol.write_csv(&mut csv, DEFAULT_TOL_FACTOR).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("x1,x2,u,phi,contact_flag\n"));
    assert_eq!(text.lines().count(), sol.mesh.vertices.len() + 1);
    let json = serde_json::to_string(&sol.stats).unwrap();
    let back: SolveStats = serde_json::from_str(&json).unwrap();
    assert_eq!(back, sol.stats);
}
