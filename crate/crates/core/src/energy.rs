//! The constrained variational problem: energy, Sobolev gradient, Nehari
//! projections and Morse index for
//!
//!   E(u) = 1/2 ‖u‖_H^2 − (λ/p) ∫ |u|^p,   ‖u‖_H^2 = ∫ |∇u|^2 + V u^2.
//!
//! Critical points solve −Δu + Vu = λ|u|^{p−2}u. All tolerances are
//! relative, so the whole calculus is covariant under the scaling
//! u ↦ c u, λ ↦ c^{2−p} λ.

use crate::error::{Error, Result};
use crate::grid::{lp_integral, Field};
use crate::operator::{h_norm_sq, solve_spd_warm, Operator};
use crate::spectrum::{eig_engine, StopRule};

/// Exponent and multiplier of the nonlinearity. Requires 2 < p (subcritical
/// growth is not checked — any p > 2 is meaningful on a grid) and λ > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub p: f64,
    pub lambda: f64,
}

impl ProblemParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        let params = ProblemParams { p, lambda };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "exponent p must be finite and > 2, got {}",
                self.p
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "multiplier lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Nodal nonlinearity f(u) = |u|^{p−2} u.
pub fn nonlinearity(u: &Field, p: f64) -> Field {
    let mut out = u.clone();
    for v in out.values_mut() {
        *v = v.abs().powf(p - 2.0) * *v;
    }
    out
}

/// E(u) = 1/2 ‖u‖_H^2 − (λ/p) ∫ |u|^p.
pub fn energy(op: &Operator, params: &ProblemParams, u: &Field) -> Result<f64> {
    let quad = h_norm_sq(op, u)?;
    let lp = lp_integral(u, params.p)?;
    Ok(0.5 * quad - params.lambda / params.p * lp)
}

/// Sobolev (H-inner-product) gradient: ∇E(u) = u − λ A^{-1} f(u), so that
/// ⟨∇E(u), v⟩_H = E'(u)[v] for every v. One SPD solve per evaluation;
/// `warm` seeds the CG iteration (pass the previous A^{-1} f(u)).
pub fn grad_h_warm(
    op: &Operator,
    params: &ProblemParams,
    u: &Field,
    warm: Option<&Field>,
    cg_tol: f64,
) -> Result<(Field, Field)> {
    let f = nonlinearity(u, params.p);
    let inv = match warm {
        Some(w) => solve_spd_warm(op, &f, w, cg_tol, 100_000)?,
        None => solve_spd_warm(op, &f, &Field::zeros(op.grid()), cg_tol, 100_000)?,
    };
    let mut g = u.clone();
    g.axpy(-params.lambda, &inv);
    Ok((g, inv))
}

pub fn grad_h(op: &Operator, params: &ProblemParams, u: &Field, cg_tol: f64) -> Result<Field> {
    Ok(grad_h_warm(op, params, u, None, cg_tol)?.0)
}

/// Scale u onto the Nehari set: t = (‖u‖_H^2 / (λ ∫|u|^p))^{1/(p−2)},
/// the unique maximizer of t ↦ E(tu). Returns (t·u, t).
pub fn nehari_project(op: &Operator, params: &ProblemParams, u: &Field) -> Result<(Field, f64)> {
    let t = nehari_scale(op, params, u)?;
    Ok((u.scaled(t), t))
}

fn nehari_scale(op: &Operator, params: &ProblemParams, u: &Field) -> Result<f64> {
    let lp = lp_integral(u, params.p)?;
    if lp <= 0.0 {
        return Err(Error::ZeroField);
    }
    let quad = h_norm_sq(op, u)?;
    if quad <= 0.0 {
        // ‖·‖_H is definite only on positive operators; a nonpositive
        // quadratic form cannot be projected.
        return Err(Error::NotPositiveDefinite);
    }
    Ok((quad / (params.lambda * lp)).powf(1.0 / (params.p - 2.0)))
}

/// Scale the positive and negative parts independently so each lands on
/// the Nehari set: the nodal Nehari projection. Returns (t⁺u⁺ + t⁻u⁻, t⁺, t⁻).
pub fn nodal_nehari_project(
    op: &Operator,
    params: &ProblemParams,
    u: &Field,
) -> Result<(Field, f64, f64)> {
    let (plus, minus) = u.split_parts();
    if plus.max_abs() == 0.0 {
        return Err(Error::PartVanished("positive"));
    }
    if minus.max_abs() == 0.0 {
        return Err(Error::PartVanished("negative"));
    }
    let tp = nehari_scale(op, params, &plus)?;
    let tm = nehari_scale(op, params, &minus)?;
    let mut out = plus.scaled(tp);
    out.axpy(tm, &minus);
    Ok((out, tp, tm))
}

/// The linearization A − λ(p−1)|u|^{p−2} of the equation at u, whose
/// negative eigenvalues the Morse index counts.
pub fn morse_operator(op: &Operator, params: &ProblemParams, u: &Field) -> Result<Operator> {
    let mut shift = u.clone();
    let p = params.p;
    for v in shift.values_mut() {
        *v = -params.lambda * (p - 1.0) * v.abs().powf(p - 2.0);
    }
    op.with_diagonal_shift(&shift)
}

/// Morse index plus an L2-orthonormal basis of the negative directions
/// (used to escape saddles with too many descent directions).
pub fn morse_data(
    op: &Operator,
    params: &ProblemParams,
    u: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<(usize, Vec<Field>)> {
    let linearized = morse_operator(op, params, u)?;
    let budget = 16;
    let pairs = eig_engine(&linearized, budget, tol, max_iter, StopRule::FirstNonNegative)?;
    let spread = linearized.gershgorin_upper_bound() - linearized.gershgorin_lower_bound();
    let tol_zero = 1e-9 * spread.max(f64::MIN_POSITIVE);
    if pairs.last().is_some_and(|(lam, _)| *lam <= tol_zero) {
        // Every eigenvalue in the budget was negative; the index is not
        // certified.
        return Err(Error::ClusterMissing(budget, budget + 1));
    }
    let grid = op.grid();
    let inv_h = 1.0 / grid.h;
    let mut directions = Vec::new();
    for (lam, raw) in pairs {
        if lam < -tol_zero {
            let values = raw.iter().map(|v| v * inv_h).collect();
            directions.push(Field::from_values(grid, values)?);
        }
    }
    Ok((directions.len(), directions))
}

/// Number of negative eigenvalues of the linearization at u.
pub fn morse_index(
    op: &Operator,
    params: &ProblemParams,
    u: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    Ok(morse_data(op, params, u, tol, max_iter)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain, Grid};
    use crate::operator::{assemble, h_inner};
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

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(4.0, 1.0).is_ok());
        assert!(ProblemParams::new(2.0, 1.0).is_err());
        assert!(ProblemParams::new(4.0, 0.0).is_err());
        assert!(ProblemParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = unit_square(10);
        let v = Field::from_fn(&g, |x, _| 1.0 + x);
        let op = assemble(&g, &v).unwrap();
        let params = ProblemParams::new(3.5, 2.0).unwrap();

        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin() + 0.3 * x * y);
        let dir = Field::from_fn(&g, |x, y| x * x - y + 0.5 * (3.0 * x).cos());

        let grad = grad_h(&op, &params, &u, 1e-12).unwrap();
        let predicted = h_inner(&op, &grad, &dir).unwrap();

        let eps = 1e-5;
        let mut up = u.clone();
        up.axpy(eps, &dir);
        let mut dn = u.clone();
        dn.axpy(-eps, &dir);
        let fd = (energy(&op, &params, &up).unwrap() - energy(&op, &params, &dn).unwrap())
            / (2.0 * eps);
        assert!(
            (predicted - fd).abs() <= 1e-5 * fd.abs().max(1.0),
            "⟨∇E, v⟩ = {predicted} vs FD {fd}"
        );
    }

    #[test]
    fn nehari_projection_lands_on_nehari() {
        let g = unit_square(12);
        let v = Field::from_fn(&g, |_, y| 0.5 + y);
        let op = assemble(&g, &v).unwrap();
        let params = ProblemParams::new(4.0, 3.0).unwrap();

        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin() * (1.0 + x));
        let (proj, t) = nehari_project(&op, &params, &u).unwrap();
        assert!(t > 0.0);
        let quad = h_norm_sq(&op, &proj).unwrap();
        let lp = params.lambda * lp_integral(&proj, params.p).unwrap();
        assert!(
            (quad - lp).abs() <= 1e-10 * quad.abs(),
            "Nehari defect {}",
            (quad - lp).abs() / quad
        );

        // On the Nehari set the energy collapses to (1/2 − 1/p)‖u‖_H².
        let e = energy(&op, &params, &proj).unwrap();
        let identity = (0.5 - 1.0 / params.p) * quad;
        assert!((e - identity).abs() <= 1e-12 * e.abs());

        // Scaling covariance of t: t(cu) = t(u)/c.
        let (_, t4) = nehari_project(&op, &params, &u.scaled(4.0)).unwrap();
        assert!((t4 - t / 4.0).abs() <= 1e-12 * t);

        let zero = Field::zeros(&g);
        assert!(matches!(
            nehari_project(&op, &params, &zero),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn nodal_projection_handles_parts() {
        let g = unit_square(12);
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();

        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let (proj, tp, tm) = nodal_nehari_project(&op, &params, &u).unwrap();
        assert!(tp > 0.0 && tm > 0.0);
        for part in [proj.split_parts().0, proj.split_parts().1] {
            let quad = h_norm_sq(&op, &part).unwrap();
            let lp = params.lambda * lp_integral(&part, params.p).unwrap();
            assert!((quad - lp).abs() <= 1e-10 * quad.abs());
        }

        let positive = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        assert!(matches!(
            nodal_nehari_project(&op, &params, &positive),
            Err(Error::PartVanished("negative"))
        ));
    }

    #[test]
    fn morse_index_counts_negative_directions() {
        let g = unit_square(8);
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let params = ProblemParams::new(4.0, 1.0).unwrap();

        let e1 = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());

        // Small amplitudes barely perturb A, which is positive definite.
        let (idx, dirs) = morse_data(&op, &params, &e1.scaled(0.1), 1e-8, 400).unwrap();
        assert_eq!(idx, 0);
        assert!(dirs.is_empty());

        // On the Nehari set the e1 direction itself has negative curvature
        // (Rayleigh value −(p−2)λ1) while the rest stays positive.
        let (proj, _) = nehari_project(&op, &params, &e1).unwrap();
        let (idx, dirs) = morse_data(&op, &params, &proj, 1e-8, 400).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(dirs.len(), 1);
    }
}
