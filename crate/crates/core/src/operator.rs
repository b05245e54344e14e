//! The discrete Schrödinger operator -Δ + V on a masked lattice.
//!
//! Five-point stencil plus a diagonal potential. With the quadrature
//! weight `w = h^2`, `u' (w A) v` approximates `∫ ∇u·∇v + V u v`, the
//! energy inner product of the problem.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

const VACANT: u32 = u32::MAX;

/// Sparse symmetric matrix for -Δ_h + diag(V).
///
/// Row k: `(4/h^2 + V_k)` on the diagonal, `-1/h^2` for each interior
/// neighbor; boundary neighbors contribute nothing (Dirichlet extension).
pub struct Operator {
    grid: Arc<Grid>,
    diag: Vec<f64>,
    nbrs: Vec<[u32; 4]>,
    inv_h2: f64,
    pd_cache: OnceLock<bool>,
}

/// Assemble the operator for a potential sampled on the grid.
pub fn assemble(grid: &Arc<Grid>, potential: &Field) -> Result<Operator> {
    if !grid.same_layout(potential.grid()) {
        return Err(Error::GridMismatch(
            "potential sampled on a different grid".to_string(),
        ));
    }
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let n = grid.node_count();
    let mut diag = Vec::with_capacity(n);
    let mut nbrs = Vec::with_capacity(n);
    for node in 0..n {
        diag.push(4.0 * inv_h2 + potential.values()[node]);
        let nb = grid.neighbors(node);
        nbrs.push(nb.map(|o| o.map_or(VACANT, |i| i as u32)));
    }
    Ok(Operator {
        grid: Arc::clone(grid),
        diag,
        nbrs,
        inv_h2,
        pd_cache: OnceLock::new(),
    })
}

impl Operator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// A copy of this operator with the diagonal shifted by `shift` per node
    /// (the linearization `A - λ(p-1)|u|^{p-2}` and the deflated system
    /// `A - λ_i` are both diagonal modifications).
    pub fn with_diagonal_shift(&self, shift: &Field) -> Result<Operator> {
        if !self.grid.same_layout(shift.grid()) {
            return Err(Error::GridMismatch(
                "diagonal shift on a different grid".to_string(),
            ));
        }
        let diag = self
            .diag
            .iter()
            .zip(shift.values())
            .map(|(d, s)| d + s)
            .collect();
        Ok(Operator {
            grid: Arc::clone(&self.grid),
            diag,
            nbrs: self.nbrs.clone(),
            inv_h2: self.inv_h2,
            pd_cache: OnceLock::new(),
        })
    }

    pub fn with_constant_shift(&self, shift: f64) -> Operator {
        Operator {
            grid: Arc::clone(&self.grid),
            diag: self.diag.iter().map(|d| d + shift).collect(),
            nbrs: self.nbrs.clone(),
            inv_h2: self.inv_h2,
            pd_cache: OnceLock::new(),
        }
    }

    /// y = A x on raw value slices.
    pub fn apply_slice(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.diag.len());
        debug_assert_eq!(y.len(), self.diag.len());
        for k in 0..self.diag.len() {
            let mut s = 0.0;
            for &nb in &self.nbrs[k] {
                if nb != VACANT {
                    s += x[nb as usize];
                }
            }
            y[k] = self.diag[k] * x[k] - self.inv_h2 * s;
        }
    }

    pub fn apply(&self, x: &Field) -> Field {
        let mut y = Field::zeros(&self.grid);
        self.apply_slice(x.values(), y.values_mut());
        y
    }

    /// Lower bound on the spectrum from Gershgorin disks. Used to shift
    /// indefinite operators into positive definite territory for the
    /// eigensolver's inner CG solves.
    pub fn gershgorin_lower_bound(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for k in 0..self.diag.len() {
            let links = self.nbrs[k].iter().filter(|&&nb| nb != VACANT).count() as f64;
            bound = bound.min(self.diag[k] - links * self.inv_h2);
        }
        bound
    }

    pub fn gershgorin_upper_bound(&self) -> f64 {
        let mut bound = f64::NEG_INFINITY;
        for k in 0..self.diag.len() {
            let links = self.nbrs[k].iter().filter(|&&nb| nb != VACANT).count() as f64;
            bound = bound.max(self.diag[k] + links * self.inv_h2);
        }
        bound
    }

    /// Exact structural symmetry: each off-diagonal link is reciprocal with
    /// the same coefficient -1/h^2, so max|A - A'| = 0 identically. Returns
    /// false only if the neighbor table is corrupt.
    pub fn is_symmetric(&self) -> bool {
        for (k, nb) in self.nbrs.iter().enumerate() {
            for &j in nb {
                if j == VACANT {
                    continue;
                }
                if !self.nbrs[j as usize].contains(&(k as u32)) {
                    return false;
                }
            }
        }
        true
    }

    pub fn mark_positive_definite(&self, value: bool) {
        let _ = self.pd_cache.set(value);
    }

    pub fn positive_definite_cache(&self) -> Option<bool> {
        self.pd_cache.get().copied()
    }
}

/// Energy inner product ⟨u,v⟩ = h^2 * v'(A u) ≈ ∫ ∇u·∇v + V u v.
pub fn h_inner(op: &Operator, u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    if !op.grid().same_layout(u.grid()) {
        return Err(Error::GridMismatch("field/operator grid mismatch".to_string()));
    }
    let au = op.apply(u);
    Ok(v.dot_l2(&au))
}

pub fn h_norm_sq(op: &Operator, u: &Field) -> Result<f64> {
    h_inner(op, u, u)
}

/// Conjugate-gradient solve of `A x = rhs` with Jacobi preconditioning.
/// Deterministic (fixed summation order). `tol` is relative to ‖rhs‖.
pub fn solve_spd(op: &Operator, rhs: &Field, tol: f64, max_iter: usize) -> Result<Field> {
    let x0 = Field::zeros(op.grid());
    solve_spd_warm(op, rhs, &x0, tol, max_iter)
}

/// Same as [`solve_spd`] but starting from an initial guess.
pub fn solve_spd_warm(
    op: &Operator,
    rhs: &Field,
    x0: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<Field> {
    if !op.grid().same_layout(rhs.grid()) {
        return Err(Error::GridMismatch("rhs/operator grid mismatch".to_string()));
    }
    let n = op.node_count();
    let b = rhs.values();
    let b_norm = b.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
    if b_norm == 0.0 {
        return Ok(Field::zeros(op.grid()));
    }

    // Diagonal preconditioner; fall back to identity where the diagonal
    // is not positive (strongly indefinite shifts).
    let precond: Vec<f64> = op
        .diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.clone();
    let mut r = vec![0.0; n];
    op.apply_slice(x.values(), &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = (0..n).map(|k| precond[k] * r[k]).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut r_norm = r.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
    if r_norm <= tol * b_norm {
        return Ok(x);
    }

    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        op.apply_slice(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            op.mark_positive_definite(false);
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for k in 0..n {
            x.values_mut()[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        r_norm = r.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
        if r_norm <= tol * b_norm {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = precond[k] * r[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: r_norm / b_norm,
    })
}

/// Outcome of a deflated CG solve. Unlike [`solve_spd`], hitting the
/// iteration cap is reported through `converged` rather than an error:
/// inexact solves are acceptable inside inverse iteration.
pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Project `v` onto the orthogonal complement of `basis` (raw-orthonormal
/// vectors), in place.
pub(crate) fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for e in basis {
        let c: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
        for k in 0..v.len() {
            v[k] -= c * e[k];
        }
    }
}

/// Jacobi-preconditioned CG restricted to the orthogonal complement of
/// `basis`: solves `P A P x = P rhs` where `P` deflates the basis vectors.
/// Positive definiteness is only required on the complement. Errors only
/// on a negative-curvature direction.
pub(crate) fn deflated_cg(
    op: &Operator,
    rhs: &[f64],
    basis: &[Vec<f64>],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.node_count();
    let mut b = rhs.to_vec();
    project_out(&mut b, basis);
    let b_norm = b.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            rel_residual: 0.0,
            converged: true,
        });
    }
    let precond: Vec<f64> = op
        .diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    project_out(&mut x, basis);
    let mut r = vec![0.0; n];
    op.apply_slice(&x, &mut r);
    project_out(&mut r, basis);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = (0..n).map(|k| precond[k] * r[k]).collect();
    project_out(&mut z, basis);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut r_norm = r.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
    let mut ap = vec![0.0; n];
    let mut iterations = 0usize;
    while r_norm > tol * b_norm && iterations < max_iter {
        op.apply_slice(&p, &mut ap);
        project_out(&mut ap, basis);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        r_norm = r.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt();
        for k in 0..n {
            z[k] = precond[k] * r[k];
        }
        project_out(&mut z, basis);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        iterations += 1;
    }
    Ok(CgOutcome {
        x,
        rel_residual: r_norm / b_norm,
        converged: r_norm <= tol * b_norm,
    })
}

/// Diagnostic record for the operator assumptions: positive definiteness
/// and equivalence of the energy norm with the plain H1 seminorm.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub smallest_eigenvalue: f64,
    pub positive_definite: bool,
    /// Bounds on h_norm_sq(u) / |u|_{H1}^2 over random fields.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_finite: bool,
    pub note: String,
}

/// Check positive definiteness (via the smallest eigenvalue) and estimate
/// the norm-equivalence constants against the V = 0 seminorm.
pub fn check_assumptions(op: &Operator, potential: &Field) -> Result<AssumptionReport> {
    let grid = op.grid();
    let zero_v = Field::zeros(grid);
    let laplacian = assemble(grid, &zero_v)?;

    let smallest = crate::spectrum::smallest_eigenvalue(op, 1e-8, 2000)?;
    let positive_definite = smallest > 0.0;
    op.mark_positive_definite(positive_definite);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    for _ in 0..50 {
        let u = Field::from_values(
            grid,
            (0..grid.node_count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )?;
        let h1 = h_norm_sq(&laplacian, &u)?;
        if h1 <= 0.0 {
            continue;
        }
        let ratio = h_norm_sq(op, &u)? / h1;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
    }

    let v_min = potential.min();
    let v_max = potential.max();
    let v_finite = potential.values().iter().all(|v| v.is_finite());
    Ok(AssumptionReport {
        smallest_eigenvalue: smallest,
        positive_definite,
        ratio_min,
        ratio_max,
        v_min,
        v_max,
        v_finite,
        note: "nodal finiteness of V stands in for V+ integrability; \
               singular potentials are sampled with micro-offsets"
            .to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    fn square(resolution: u32) -> Arc<Grid> {
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

    fn centered_square(resolution: u32) -> Arc<Grid> {
        build_grid(
            Domain::Rectangle {
                x0: -1.0,
                x1: 1.0,
                y0: -1.0,
                y1: 1.0,
            },
            resolution,
        )
        .unwrap()
    }

    #[test]
    fn stencil_diagonal_values() {
        let g = square(4);
        let v0 = Field::zeros(&g);
        let op = assemble(&g, &v0).unwrap();
        for &d in op.diag() {
            assert_eq!(d, 64.0);
        }

        let c = Field::from_fn(&g, |_, _| 2.5);
        let shifted = assemble(&g, &c).unwrap();
        for &d in shifted.diag() {
            assert_eq!(d, 66.5);
        }
    }

    #[test]
    fn exact_symmetry() {
        let g = build_grid(
            Domain::Disk {
                cx: 0.1,
                cy: -0.2,
                radius: 1.0,
            },
            16,
        )
        .unwrap();
        let v = Field::from_fn(&g, |x, y| x + y);
        let op = assemble(&g, &v).unwrap();
        assert!(op.is_symmetric());
    }

    #[test]
    fn h_inner_symmetry_and_zero() {
        let g = square(12);
        let v = Field::from_fn(&g, |x, _| 1.0 + x);
        let op = assemble(&g, &v).unwrap();
        let zero = Field::zeros(&g);
        assert_eq!(h_norm_sq(&op, &zero).unwrap(), 0.0);

        let u = Field::from_fn(&g, |x, y| (5.0 * x * y).sin());
        let w = Field::from_fn(&g, |x, y| x * x - y);
        let a = h_inner(&op, &u, &w).unwrap();
        let b = h_inner(&op, &w, &u).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn cg_recovers_known_solution() {
        let g = square(16);
        let v = Field::from_fn(&g, |x, y| 1.0 + x + y);
        let op = assemble(&g, &v).unwrap();
        let truth = Field::from_fn(&g, |x, y| (3.0 * x).cos() * y);
        let rhs = op.apply(&truth);
        let x = solve_spd(&op, &rhs, 1e-12, 10_000).unwrap();
        let err = x.sub(&truth).max_abs() / truth.max_abs();
        assert!(err < 1e-9, "relative error {err}");

        let zero = Field::zeros(&g);
        let x = solve_spd(&op, &zero, 1e-12, 100).unwrap();
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn cg_residual_bound_holds() {
        let g = square(20);
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let rhs = Field::from_fn(&g, |x, y| (x * 9.0).sin() + y);
        let tol = 1e-8;
        let x = solve_spd(&op, &rhs, tol, 10_000).unwrap();
        let mut r = op.apply(&x);
        r.axpy(-1.0, &rhs);
        let rel = r.dot_raw(&r).sqrt() / rhs.dot_raw(&rhs).sqrt();
        assert!(rel <= tol, "residual {rel} above tol {tol}");
    }

    #[test]
    fn poisson_torsion_center_value() {
        // -Δu = 1 on (0,1)^2; Fourier series oracle for u(1/2,1/2).
        let mut oracle = 0.0;
        for m in (1..200).step_by(2) {
            for n in (1..200).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                let sign = (((m - 1) / 2 + (n - 1) / 2) % 2 == 0) as i32 as f64 * 2.0 - 1.0;
                oracle += 16.0 * sign
                    / (std::f64::consts::PI.powi(4) * mf * nf * (mf * mf + nf * nf));
            }
        }
        let g = square(32);
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let rhs = Field::from_fn(&g, |_, _| 1.0);
        let u = solve_spd(&op, &rhs, 1e-10, 20_000).unwrap();
        let max = u.max();
        assert!(
            (max - oracle).abs() <= 0.02 * oracle,
            "center value {max} vs oracle {oracle}"
        );
    }

    #[test]
    fn indefinite_operator_detected() {
        let g = centered_square(12);
        let v = Field::from_fn(&g, |_, _| -10.0);
        let op = assemble(&g, &v).unwrap();
        let rhs = Field::from_fn(&g, |_, _| 1.0);
        match solve_spd(&op, &rhs, 1e-10, 10_000) {
            Err(Error::NotPositiveDefinite) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn assumption_checks() {
        let g = centered_square(12);

        let v0 = Field::zeros(&g);
        let op = assemble(&g, &v0).unwrap();
        let report = check_assumptions(&op, &v0).unwrap();
        assert!(report.positive_definite);
        assert!((report.ratio_min - 1.0).abs() < 1e-12);
        assert!((report.ratio_max - 1.0).abs() < 1e-12);

        let quarter = -std::f64::consts::PI.powi(2) / 4.0;
        let v = Field::from_fn(&g, |_, _| quarter);
        let op = assemble(&g, &v).unwrap();
        let report = check_assumptions(&op, &v).unwrap();
        assert!(report.positive_definite);
        // continuum λ1 = π²/2 + V = π²/4
        let expected = std::f64::consts::PI.powi(2) / 2.0 + quarter;
        assert!(
            (report.smallest_eigenvalue - expected).abs() < 0.01 * expected,
            "λ1 = {} vs {expected}",
            report.smallest_eigenvalue
        );

        let v = Field::from_fn(&g, |_, _| -10.0);
        let op = assemble(&g, &v).unwrap();
        let report = check_assumptions(&op, &v).unwrap();
        assert!(!report.positive_definite);
        assert!(report.smallest_eigenvalue < 0.0);
    }
}
