//! The p → 2 limit: minimizers of the limit energy on eigenspaces and
//! predictor-corrector continuation towards them.
//!
//! As p ↓ 2 the (nodal) ground states at λ concentrate, after the
//! rescaling (λ_i/λ)^{1/(2−p)}, on the eigenspace E_i, and the rescaled
//! limits minimize
//!
//!   E*(u) = (λ_i/2) ∫ (u² − u² log u²)
//!
//! over E_i \ {0} subject to ∫ u² log u² = 0. Along each ray the
//! constraint fixes the scale in closed form: for ‖v‖_{L²} = 1,
//! log t² = −∫ v² log v² and E*(tv) = (λ_i/2) t². Minimizing over the
//! unit sphere of E_i is therefore maximizing G(v) = ∫ v² log v², a
//! search over a point (d = 1), a circle (d = 2) or a 2-sphere (d = 3).

use crate::energy::ProblemParams;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{deflated_cg, h_norm_sq, Operator};
use crate::solve::{solve, SolveConfig, SolveMode, SolveResult};
use crate::spectrum::Spectrum;

/// Minimizer of the limit energy on one eigenspace.
#[derive(Debug, Clone)]
pub struct LimitMinimizer {
    /// u* = t v*, the limit profile itself.
    pub field: Field,
    /// Coordinates of v* in the cluster's orthonormal eigenbasis.
    pub coefficients: Vec<f64>,
    /// The ray scale t with log t² = −G(v*).
    pub scale: f64,
    /// E*(u*) = (λ_i/2) t².
    pub limit_energy: f64,
    /// λ_i of the cluster.
    pub eigenvalue: f64,
}

/// G(v) = ∫ v² log v² for v = Σ c_d b_d, normalized to ‖v‖_{L²} = 1
/// internally (guards against rounding in the eigenbasis).
fn sphere_objective(basis: &[&[f64]], c: &[f64], weight: f64) -> f64 {
    let n = basis[0].len();
    let mut nrm2 = 0.0;
    for k in 0..n {
        let mut v = 0.0;
        for (d, b) in basis.iter().enumerate() {
            v += c[d] * b[k];
        }
        nrm2 += v * v;
    }
    nrm2 *= weight;
    let s = 1.0 / nrm2.sqrt();
    let mut g = 0.0;
    for k in 0..n {
        let mut v = 0.0;
        for (d, b) in basis.iter().enumerate() {
            v += c[d] * b[k];
        }
        v *= s;
        if v != 0.0 {
            g += v * v * (v * v).ln();
        }
    }
    g * weight
}

/// Golden-section search for the maximum of f on [a, b] (unimodal there).
fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub fn limit_minimize(spec: &Spectrum, cluster: usize) -> Result<LimitMinimizer> {
    let cl = spec.cluster(cluster);
    let d = cl.multiplicity();
    let basis: Vec<&[f64]> = cl.basis.iter().map(|f| f.values()).collect();
    let grid = cl.basis[0].grid();
    let weight = grid.weight();
    let objective = |c: &[f64]| sphere_objective(&basis, c, weight);

    let c_best: Vec<f64> = match d {
        1 => vec![1.0],
        2 => {
            // Antipodal points give the same G; scan half the circle.
            let mut best = (f64::NEG_INFINITY, 0.0);
            let steps = 720;
            for s in 0..steps {
                let theta = std::f64::consts::PI * s as f64 / steps as f64;
                let g = objective(&[theta.cos(), theta.sin()]);
                if g > best.0 {
                    best = (g, theta);
                }
            }
            let span = std::f64::consts::PI / steps as f64;
            let theta = golden_max(best.1 - span, best.1 + span, |t| {
                objective(&[t.cos(), t.sin()])
            });
            vec![theta.cos(), theta.sin()]
        }
        3 => {
            // Lat-long scan of the hemisphere, then local grid shrinking.
            let dir = |phi: f64, theta: f64| {
                [phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()]
            };
            let mut best = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
            for i in 0..=45 {
                let phi = std::f64::consts::FRAC_PI_2 * i as f64 / 45.0;
                for j in 0..180 {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / 180.0;
                    let g = objective(&dir(phi, theta));
                    if g > best.0 {
                        best = (g, phi, theta);
                    }
                }
            }
            let mut step = std::f64::consts::FRAC_PI_2 / 45.0;
            for _ in 0..30 {
                let (_, phi0, theta0) = best;
                for di in -2i32..=2 {
                    for dj in -2i32..=2 {
                        let phi = phi0 + step * di as f64 / 2.0;
                        let theta = theta0 + step * dj as f64 / 2.0;
                        let g = objective(&dir(phi, theta));
                        if g > best.0 {
                            best = (g, phi, theta);
                        }
                    }
                }
                step *= 0.5;
            }
            dir(best.1, best.2).to_vec()
        }
        other => return Err(Error::ClusterTooLarge(other)),
    };

    let g_max = objective(&c_best);
    let t = (-0.5 * g_max).exp();

    let mut v = Field::zeros(grid);
    for (coef, e) in c_best.iter().zip(&cl.basis) {
        v.axpy(*coef, e);
    }
    // Deterministic orientation: strongest node positive.
    let flip = {
        let max = v.max();
        let min = v.min();
        -min > max
    };
    let mut coefficients = c_best;
    if flip {
        v.scale(-1.0);
        for c in &mut coefficients {
            *c = -*c;
        }
    }
    let nrm = v.norm_l2_sq().sqrt();
    let field = v.scaled(t / nrm);

    Ok(LimitMinimizer {
        field,
        coefficients,
        scale: t,
        limit_energy: 0.5 * cl.eigenvalue * t * t,
        eigenvalue: cl.eigenvalue,
    })
}

/// First-order corrector: the solution of
///
///   (A − λ_i) w = λ_i u* log|u*|,   w ⊥ E_i,
///
/// so that u* + (p−2) w predicts the solution branch near p = 2.
/// Components along every computed eigenvector are resolved analytically;
/// the remainder is a deflated CG solve on the (positive definite)
/// complement.
pub fn predictor_w(
    op: &Operator,
    spec: &Spectrum,
    cluster: usize,
    u_star: &Field,
    cg_tol: f64,
    max_iter: usize,
) -> Result<Field> {
    let lam = spec.eigenvalue(cluster);
    let grid = op.grid();
    if !grid.same_layout(u_star.grid()) {
        return Err(Error::GridMismatch("limit profile on a different grid".to_string()));
    }
    let mut rhs = u_star.clone();
    for v in rhs.values_mut() {
        let a = *v;
        *v = if a == 0.0 { 0.0 } else { lam * a * a.abs().ln() };
    }

    let mut w = Field::zeros(grid);
    let mut remainder = rhs.clone();
    for (j, cl) in spec.clusters().iter().enumerate() {
        for (m, e) in cl.basis.iter().enumerate() {
            let coef = rhs.dot_l2(e);
            remainder.axpy(-coef, e);
            if j != cluster {
                w.axpy(coef / (cl.members[m] - lam), e);
            }
            // j == cluster: the E_i component is dropped (Fredholm
            // condition / the gauge w ⊥ E_i).
        }
    }

    let shifted = op.with_constant_shift(-lam);
    let h = grid.h;
    let basis_raw: Vec<Vec<f64>> = spec
        .clusters()
        .iter()
        .flat_map(|cl| cl.basis.iter())
        .map(|e| e.values().iter().map(|v| v * h).collect())
        .collect();
    let out = deflated_cg(&shifted, remainder.values(), &basis_raw, None, cg_tol, max_iter)?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: max_iter,
            residual: out.rel_residual,
        });
    }
    let tail = Field::from_values(grid, out.x)?;
    Ok(w.add(&tail))
}

/// One solve of the continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationStep {
    pub p: f64,
    pub energy: f64,
    pub iterations: usize,
    pub grad_rel: f64,
    pub morse_index: Option<usize>,
    /// ‖u_p‖_H of the raw solution.
    pub h_norm: f64,
    /// ‖û_p‖_H after the (λ_i/λ)^{1/(2−p)} rescaling.
    pub rescaled_h_norm: f64,
    /// min± ‖û_p ∓ u*‖_H / ‖u*‖_H.
    pub limit_distance_rel: f64,
    pub field: Field,
}

#[derive(Debug)]
pub struct Continuation {
    pub limit: LimitMinimizer,
    pub predictor: Field,
    pub steps: Vec<ContinuationStep>,
}

/// Follow the branch of solutions at fixed λ through a decreasing list of
/// exponents towards p = 2, starting from the predictor seed
/// u* + (p_0 − 2) w and warm-starting each step from the previous one.
pub fn continuation(
    op: &Operator,
    spec: &Spectrum,
    cluster: usize,
    mode: SolveMode,
    lambda: f64,
    p_list: &[f64],
    cfg: &SolveConfig,
) -> Result<Continuation> {
    if p_list.is_empty() {
        return Err(Error::InvalidParameter("empty exponent list".to_string()));
    }
    for pair in p_list.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidParameter(
                "exponent list must decrease strictly".to_string(),
            ));
        }
    }

    let limit = limit_minimize(spec, cluster)?;
    let predictor = predictor_w(op, spec, cluster, &limit.field, 1e-10, 50_000)?;
    let lam_i = limit.eigenvalue;
    let u_star_h = h_norm_sq(op, &limit.field)?.sqrt();

    let mut steps = Vec::with_capacity(p_list.len());
    let mut previous: Option<Field> = None;
    for &p in p_list {
        let params = ProblemParams::new(p, lambda)?;
        let seed = match &previous {
            Some(u) => u.clone(),
            None => {
                let mut s = limit.field.clone();
                s.axpy(p - 2.0, &predictor);
                s
            }
        };
        let result: SolveResult = solve(op, &params, &seed, mode, cfg)?;

        let factor = (lam_i / lambda).powf(1.0 / (2.0 - p));
        let rescaled = result.field.scaled(factor);
        let mut diff_minus = rescaled.clone();
        diff_minus.axpy(-1.0, &limit.field);
        let mut diff_plus = rescaled.clone();
        diff_plus.axpy(1.0, &limit.field);
        let dist = h_norm_sq(op, &diff_minus)?
            .min(h_norm_sq(op, &diff_plus)?)
            .sqrt()
            / u_star_h;

        steps.push(ContinuationStep {
            p,
            energy: result.energy,
            iterations: result.iterations,
            grad_rel: result.grad_rel,
            morse_index: result.morse_index,
            h_norm: h_norm_sq(op, &result.field)?.sqrt(),
            rescaled_h_norm: h_norm_sq(op, &rescaled)?.sqrt(),
            limit_distance_rel: dist,
            field: result.field.clone(),
        });
        previous = Some(result.field);
    }

    Ok(Continuation {
        limit,
        predictor,
        steps,
    })
}
