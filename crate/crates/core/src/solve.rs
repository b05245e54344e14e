//! Minimization over the Nehari set (ground states) and the nodal Nehari
//! set (least-energy sign-changing solutions).
//!
//! The iteration is a projected Sobolev-gradient descent: compute the
//! H-gradient ∇E(u) = u − λA⁻¹f(u), step against it with Armijo
//! backtracking (unit initial step — the full step is a Picard/inverse
//! iteration), and reproject onto the constraint set after every step.
//!
//! A converged point is accepted only after a Morse-index audit. Symmetric
//! seeds can ride an invariant subspace into a higher saddle (the descent
//! is equivariant, so symmetry is only ever broken by the audit, never by
//! round-off luck); when the index exceeds the target (1 for ground
//! states, 2 for nodal minimizers — the radial directions account for
//! that many), the point is nudged along the computed negative directions,
//! reprojected, and descent resumes from the lowest-energy candidate.
//! Everything is deterministic.

use crate::energy::{
    energy, grad_h_warm, morse_data, nehari_project, nodal_nehari_project, ProblemParams,
};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{h_inner, h_norm_sq, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    GroundState,
    Nodal,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Stop when ‖∇E(u)‖_H ≤ grad_tol · ‖u‖_H.
    pub grad_tol: f64,
    /// Descent iteration budget per round.
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step halvings before a step counts as failed.
    pub max_backtracks: u32,
    /// Accept a line-search stall (no step decreases the energy at all)
    /// as converged when the relative gradient is at most this. The nodal
    /// projection is only piecewise smooth on a lattice — wherever the
    /// nodal line falls between nodes the constrained minimum sits in a
    /// kink of size O(h²) and the gradient cannot be driven further down.
    pub stall_tol: f64,
    /// Declare a stall when the energy drops by less than
    /// `stagnation_rtol·|E|` over this many iterations (0 disables).
    /// Catches broken-symmetry states drifting along a degenerate orbit,
    /// where the gradient stays noticeable but the descent goes nowhere.
    pub stagnation_window: usize,
    pub stagnation_rtol: f64,
    /// Audit the Morse index after convergence and escape higher saddles.
    pub check_morse: bool,
    /// How many escape-and-redescend rounds to allow.
    pub escape_rounds: usize,
    /// Eigensolver settings for the Morse audit.
    pub eig_tol: f64,
    pub eig_max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            grad_tol: 1e-6,
            max_iter: 5000,
            armijo_c: 1e-4,
            max_backtracks: 60,
            stall_tol: 1e-2,
            stagnation_window: 60,
            stagnation_rtol: 1e-12,
            check_morse: true,
            escape_rounds: 8,
            eig_tol: 1e-8,
            eig_max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: Field,
    pub energy: f64,
    pub iterations: usize,
    /// Achieved relative gradient norm.
    pub grad_rel: f64,
    /// The run ended in a line-search stall above grad_tol (lattice kink
    /// of the nodal constraint) rather than at the gradient tolerance.
    pub stalled: bool,
    /// Morse index of the linearization, when audited.
    pub morse_index: Option<usize>,
    /// Saddle escapes that were needed to get here.
    pub escape_rounds: usize,
}

pub fn ground_state(
    op: &Operator,
    params: &ProblemParams,
    seed: &Field,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve(op, params, seed, SolveMode::GroundState, cfg)
}

pub fn least_energy_nodal(
    op: &Operator,
    params: &ProblemParams,
    seed: &Field,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve(op, params, seed, SolveMode::Nodal, cfg)
}

fn project(op: &Operator, params: &ProblemParams, u: &Field, mode: SolveMode) -> Result<Field> {
    match mode {
        SolveMode::GroundState => Ok(nehari_project(op, params, u)?.0),
        SolveMode::Nodal => Ok(nodal_nehari_project(op, params, u)?.0),
    }
}

pub fn solve(
    op: &Operator,
    params: &ProblemParams,
    seed: &Field,
    mode: SolveMode,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    params.validate()?;
    if !op.grid().same_layout(seed.grid()) {
        return Err(Error::GridMismatch("seed on a different grid".to_string()));
    }
    let mut current = seed.clone();
    let mut total_iters = 0usize;
    let mut escapes = 0usize;
    loop {
        let (u, iters, rel, stalled) = run_descent(op, params, mode, &current, cfg)?;
        total_iters += iters;
        if !cfg.check_morse {
            return finish(op, params, mode, u, total_iters, rel, stalled, None, escapes);
        }
        let (idx, dirs) = morse_data(op, params, &u, cfg.eig_tol, cfg.eig_max_iter)?;
        let target = match mode {
            SolveMode::GroundState => 1,
            SolveMode::Nodal => 2,
        };
        if idx <= target || escapes >= cfg.escape_rounds {
            return finish(op, params, mode, u, total_iters, rel, stalled, Some(idx), escapes);
        }
        match escape_candidate(op, params, &u, &dirs, mode)? {
            Some(next) => {
                current = next;
                escapes += 1;
            }
            // No negative direction lowers the energy: report the saddle
            // as found rather than loop forever.
            None => {
                return finish(op, params, mode, u, total_iters, rel, stalled, Some(idx), escapes)
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    op: &Operator,
    params: &ProblemParams,
    mode: SolveMode,
    mut u: Field,
    iterations: usize,
    grad_rel: f64,
    stalled: bool,
    morse_index: Option<usize>,
    escape_rounds: usize,
) -> Result<SolveResult> {
    // Solutions come in ± pairs; normalize the reported sign: positive
    // ground states, and nodal solutions with the deeper lobe negative.
    match mode {
        SolveMode::GroundState => {
            if -u.min() > u.max() {
                u.scale(-1.0);
            }
        }
        SolveMode::Nodal => {
            if u.max() > -u.min() {
                u.scale(-1.0);
            }
        }
    }
    Ok(SolveResult {
        energy: energy(op, params, &u)?,
        field: u,
        iterations,
        grad_rel,
        stalled,
        morse_index,
        escape_rounds,
    })
}

fn run_descent(
    op: &Operator,
    params: &ProblemParams,
    mode: SolveMode,
    u0: &Field,
    cfg: &SolveConfig,
) -> Result<(Field, usize, f64, bool)> {
    let mut u = project(op, params, u0, mode)?;
    let mut warm: Option<Field> = None;
    let mut prev: Option<(Field, Field)> = None;
    let mut rel = 1.0f64;
    let mut iters = 0usize;
    let mut trail: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    while iters < cfg.max_iter {
        // Inexact-gradient forcing term: solve A⁻¹f(u) only as tightly as
        // the current gradient norm warrants.
        let cg_tol = (0.01 * rel).clamp(1e-12, 1e-2);
        let (g, inv) = grad_h_warm(op, params, &u, warm.as_ref(), cg_tol)?;
        warm = Some(inv);
        let gn2 = h_norm_sq(op, &g)?;
        let un2 = h_norm_sq(op, &u)?;
        rel = (gn2 / un2).sqrt();
        if rel <= cfg.grad_tol {
            return Ok((u, iters, rel, false));
        }

        // Barzilai–Borwein trial step (spectral estimate of the local
        // curvature along the trajectory); Armijo still guards it.
        let step0 = match &prev {
            Some((pu, pg)) => {
                let du = u.sub(pu);
                let dg = g.sub(pg);
                let denom = h_inner(op, &du, &dg)?;
                if denom > 0.0 {
                    (h_norm_sq(op, &du)? / denom).clamp(1e-3, 1e3)
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        prev = Some((u.clone(), g.clone()));

        let e0 = energy(op, params, &u)?;
        if cfg.stagnation_window > 0 {
            trail.push_back(e0);
            if trail.len() > cfg.stagnation_window {
                let old = trail.pop_front().unwrap();
                if old - e0 <= cfg.stagnation_rtol * e0.abs() && rel <= cfg.stall_tol {
                    return Ok((u, iters, rel, rel > cfg.grad_tol));
                }
            }
        }
        let mut step = step0;
        let mut accepted = false;
        for _ in 0..cfg.max_backtracks {
            let mut cand = u.clone();
            cand.axpy(-step, &g);
            match project(op, params, &cand, mode) {
                Ok(proj) => {
                    let e1 = energy(op, params, &proj)?;
                    if e1 <= e0 - cfg.armijo_c * step * gn2 {
                        u = proj;
                        accepted = true;
                        break;
                    }
                }
                // A long step may wipe out a sign or the whole field;
                // that just means the step was too long.
                Err(Error::PartVanished(_)) | Err(Error::ZeroField) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        iters += 1;
        if !accepted {
            // Line search exhausted: no step lowers the energy, so the
            // iterate sits in a kink-bottom of the discrete constraint.
            if rel <= cfg.stall_tol {
                return Ok((u, iters, rel, rel > cfg.grad_tol));
            }
            return Err(Error::NonConvergence {
                iterations: iters,
                residual: rel,
            });
        }
    }
    // Budget exhausted. A broken-symmetry state drifts almost freely along
    // its orbit (the lattice pins it only weakly), so the tail of the
    // descent can crawl; close enough is still a usable critical point.
    if rel <= cfg.stall_tol {
        return Ok((u, iters, rel, true));
    }
    Err(Error::NonConvergence {
        iterations: iters,
        residual: rel,
    })
}

/// Lowest-energy reprojected perturbation of `u` along the negative
/// directions, if any lies strictly below `u`.
fn escape_candidate(
    op: &Operator,
    params: &ProblemParams,
    u: &Field,
    dirs: &[Field],
    mode: SolveMode,
) -> Result<Option<Field>> {
    let e0 = energy(op, params, u)?;
    let amp = u.norm_l2_sq().sqrt();
    let mut best: Option<(f64, Field)> = None;
    for dir in dirs {
        for delta in [0.5, 0.25, 0.1, 0.05, 0.02] {
            for sign in [1.0f64, -1.0] {
                let mut cand = u.clone();
                cand.axpy(sign * delta * amp, dir);
                let proj = match project(op, params, &cand, mode) {
                    Ok(p) => p,
                    Err(Error::PartVanished(_)) | Err(Error::ZeroField) => continue,
                    Err(e) => return Err(e),
                };
                let e1 = energy(op, params, &proj)?;
                if e1 < e0 - 1e-12 * e0.abs() && best.as_ref().map_or(true, |(be, _)| e1 < *be) {
                    best = Some((e1, proj));
                }
            }
        }
    }
    Ok(best.map(|(_, f)| f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::nonlinearity;
    use crate::grid::{build_grid, lp_integral, Domain, Grid};
    use crate::operator::assemble;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn unit_square(resolution: u32) -> Arc<Grid> {
        build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            resolution,
        )
        .unwrap()
    }

    fn pde_residual_rel(op: &Operator, params: &ProblemParams, u: &Field) -> f64 {
        let au = op.apply(u);
        let mut r = nonlinearity(u, params.p);
        r.scale(params.lambda);
        let r = au.sub(&r);
        (r.norm_l2_sq() / au.norm_l2_sq()).sqrt()
    }

    #[test]
    fn ground_state_on_square() {
        let g = unit_square(16);
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();
        let seed = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let out = ground_state(&op, &params, &seed, &SolveConfig::default()).unwrap();

        assert!(out.grad_rel <= 1e-5);
        assert_eq!(out.morse_index, Some(1));
        assert!(out.field.min() >= -1e-6 * out.field.max(), "one-signed");
        assert!(pde_residual_rel(&op, &params, &out.field) < 1e-4);

        // Nehari energy identity survives to the solution.
        let quad = h_norm_sq(&op, &out.field).unwrap();
        assert!((out.energy - 0.25 * quad).abs() <= 1e-9 * out.energy.abs());

        // Mesh consistency: the coarse energy is in the same ballpark.
        let g8 = unit_square(8);
        let op8 = assemble(&g8, &Field::zeros(&g8)).unwrap();
        let seed8 = Field::from_fn(&g8, |x, y| (PI * x).sin() * (PI * y).sin());
        let out8 = ground_state(&op8, &params, &seed8, &SolveConfig::default()).unwrap();
        assert!((out8.energy - out.energy).abs() < 0.1 * out.energy);
    }

    #[test]
    fn nodal_solution_on_square() {
        let g = unit_square(16);
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();

        let seed = Field::from_fn(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let lens = least_energy_nodal(&op, &params, &seed, &SolveConfig::default()).unwrap();
        assert!(lens.grad_rel <= 1e-5);
        assert_eq!(lens.morse_index, Some(2));
        assert!(lens.field.min() < 0.0 && lens.field.max() > 0.0);
        assert!(pde_residual_rel(&op, &params, &lens.field) < 1e-4);

        let gs_seed = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let gs = ground_state(&op, &params, &gs_seed, &SolveConfig::default()).unwrap();
        assert!(
            lens.energy > gs.energy * 1.5,
            "nodal energy {} should sit well above the ground state {}",
            lens.energy,
            gs.energy
        );

        let positive = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        assert!(matches!(
            least_energy_nodal(&op, &params, &positive, &SolveConfig::default()),
            Err(Error::PartVanished(_))
        ));
    }

    #[test]
    fn saddle_seed_still_reaches_ground_state() {
        // sin(2πx)sin(2πy) spans an invariant subspace whose constrained
        // minimizer is a four-bump saddle. Whether round-off drift or the
        // Morse audit breaks the symmetry, the result must be the true
        // ground state.
        let g = unit_square(12);
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();
        let seed = Field::from_fn(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let out = ground_state(&op, &params, &seed, &SolveConfig::default()).unwrap();

        assert_eq!(out.morse_index, Some(1));
        assert!(out.field.min() >= -1e-6 * out.field.max());

        let direct_seed = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let direct = ground_state(&op, &params, &direct_seed, &SolveConfig::default()).unwrap();
        assert!((out.energy - direct.energy).abs() <= 1e-4 * direct.energy);
    }

    #[test]
    fn converged_saddle_is_escaped_by_the_audit() {
        // With a loose gradient tolerance the descent stops on the
        // four-bump saddle before round-off can break the symmetry; only
        // the Morse audit can walk it down from there.
        let g = unit_square(12);
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();
        let seed = Field::from_fn(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let cfg = SolveConfig {
            grad_tol: 1e-3,
            ..SolveConfig::default()
        };
        let out = ground_state(&op, &params, &seed, &cfg).unwrap();

        assert!(out.escape_rounds >= 1, "audit should have fired");
        assert_eq!(out.morse_index, Some(1));
        assert!(out.field.min() >= -1e-2 * out.field.max());
    }

    #[test]
    fn nehari_constraint_holds_at_solution() {
        let g = unit_square(12);
        let op = assemble(&g, &Field::zeros(&g)).unwrap();
        let params = ProblemParams::new(3.0, 2.0).unwrap();
        let seed = Field::from_fn(&g, |x, y| x * (1.0 - x) * y * (1.0 - y));
        let out = ground_state(&op, &params, &seed, &SolveConfig::default()).unwrap();
        let quad = h_norm_sq(&op, &out.field).unwrap();
        let lp = params.lambda * lp_integral(&out.field, params.p).unwrap();
        assert!((quad - lp).abs() <= 1e-10 * quad);
    }
}
