//! Homogeneous solutions and numerical solution of the p-Laplacian obstacle
//! problem `min{-Delta_p u, u - phi} = 0`, with free-boundary diagnostics.

pub mod error;
pub mod expr;
pub mod fem;
pub mod free_boundary;
pub mod mesh;
pub mod numerics;
pub mod obstacle;
pub mod profile;

pub use error::{Error, Result};
pub use fem::{
    complementarity_residual, energy, energy_gradient, solve, solve_on_mesh, DiscreteSolution, ProblemSpec,
    SolveStats, SolverConfig, StepRule,
};
pub use free_boundary::{
    angle_at_origin, contact_mask, contact_mask_analytic, extract_free_boundary, nondegeneracy_scan, porosity_scan,
    AngleEstimate, AnalyticField, ContactSet, DiscreteField, FreeBoundaryCurve, GapField, NondegeneracyReport,
    PorosityReport,
};
pub use mesh::{build_mesh, Domain, Mesh};
pub use numerics::QuadratureResult;
pub use obstacle::{
    barrier_search, concavity_check, hessian_bound_check, normalized_p_laplacian, BarrierResult, ConcavityReport,
    Obstacle, ObstacleSpec,
};
pub use profile::{
    admissible_k, build_profile, check_profile, theta0_closed_form, HomogeneousProfile, ProfileCheckReport,
    ProfileParams, SolutionKind,
};
