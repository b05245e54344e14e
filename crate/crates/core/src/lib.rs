//! Ground states and least-energy nodal solutions of the superlinear
//! Schrödinger equation −Δu + Vu = λ|u|^{p−2}u with Dirichlet conditions
//! on plane domains, by energy descent over Nehari sets, together with
//! the p → 2 limit machinery (eigenvalue clusters, limit-energy
//! minimizers, continuation) and symmetry classification.

pub mod contour;
pub mod energy;
pub mod error;
pub mod expr;
pub mod grid;
pub mod limit;
pub mod operator;
pub mod solve;
pub mod spectrum;
pub mod symmetry;

pub use energy::{
    energy, grad_h, morse_index, morse_operator, nehari_project, nodal_nehari_project,
    ProblemParams,
};
pub use error::{Error, Result};
pub use expr::{parse, Expr};
pub use grid::{
    build_grid, integrate, lp_integral, read_field_csv, sample, sample_default, write_field_csv,
    Domain, Field, Grid, Sampled,
};
pub use limit::{
    continuation, limit_minimize, predictor_w, Continuation, ContinuationStep, LimitMinimizer,
};
pub use operator::{
    assemble, check_assumptions, h_inner, h_norm_sq, solve_spd, AssumptionReport, Operator,
};
pub use contour::{default_levels, extract_contours, render_svg, ContourLine};
pub use solve::{ground_state, least_energy_nodal, solve, SolveConfig, SolveMode, SolveResult};
pub use spectrum::{eigs, smallest_eigenvalue, EigenCluster, Spectrum};
pub use symmetry::{
    applicable_transforms, build_transform, classify, Parity, SymmetryKind, SymmetryReport,
    Transform, TransformScore,
};
