//! Lowest eigenvalue clusters of the Schrödinger operator.
//!
//! Deflated inverse iteration with an adaptive shift. The shift starts at
//! the Gershgorin lower bound (so the inner solves are positive definite
//! even when the operator is indefinite) and tracks the Rayleigh quotient
//! from below as the residual shrinks. Eigenvalues closer than
//! `max(1e-6, 10 h^2) * |λ|` are reported as one cluster with the tied
//! eigenvectors as an orthonormal basis, which is how grid-exact
//! degeneracies (squares, disks) come out.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{deflated_cg, project_out, Operator};

/// One eigenvalue cluster: the representative value, the individual
/// (nearly equal) member values, and an L2-orthonormal eigenbasis.
pub struct EigenCluster {
    pub eigenvalue: f64,
    pub members: Vec<f64>,
    pub basis: Vec<Field>,
}

impl EigenCluster {
    pub fn multiplicity(&self) -> usize {
        self.basis.len()
    }
}

/// The lowest part of the spectrum, grouped into clusters in ascending
/// order of eigenvalue.
pub struct Spectrum {
    clusters: Vec<EigenCluster>,
}

impl Spectrum {
    /// Assemble a spectrum from externally constructed clusters (useful
    /// for tests and synthetic setups).
    pub fn synthetic(clusters: Vec<EigenCluster>) -> Self {
        Spectrum { clusters }
    }

    pub fn clusters(&self) -> &[EigenCluster] {
        &self.clusters
    }

    pub fn cluster(&self, i: usize) -> &EigenCluster {
        &self.clusters[i]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.clusters[i].eigenvalue
    }

    /// L2-orthogonal projection of `u` onto the i-th eigenspace.
    pub fn project_eigenspace(&self, i: usize, u: &Field) -> Result<Field> {
        let cluster = &self.clusters[i];
        let mut out = Field::zeros(u.grid());
        for e in &cluster.basis {
            u.check_same_grid(e)?;
            let c = u.dot_l2(e);
            out.axpy(c, e);
        }
        Ok(out)
    }

    /// True when the lowest eigenvalue is simple and its eigenfunction is
    /// one-signed — the discrete analogue of a unique positive principal
    /// eigenfunction.
    pub fn is_unique_principal(&self) -> bool {
        if self.clusters.is_empty() || self.clusters[0].multiplicity() != 1 {
            return false;
        }
        one_signed(&self.clusters[0].basis[0])
    }

    pub fn principal(&self) -> &Field {
        &self.clusters[0].basis[0]
    }
}

fn one_signed(e: &Field) -> bool {
    let max = e.max();
    let min = e.min();
    if max >= -min {
        min >= -1e-8 * max
    } else {
        max <= -1e-8 * min
    }
}

pub(crate) enum StopRule {
    /// Stop once k+1 clusters are seen (the first k are then complete).
    Clusters(usize),
    /// Stop at the first eigenvalue above +tol_zero (Morse counting).
    FirstNonNegative,
}

/// Raw-normalized eigenpairs, ascending. Shared engine behind [`eigs`],
/// [`smallest_eigenvalue`] and the Morse index count.
pub(crate) fn eig_engine(
    op: &Operator,
    budget: usize,
    tol: f64,
    max_outer: usize,
    stop: StopRule,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.node_count();
    let lo = op.gershgorin_lower_bound();
    let hi = op.gershgorin_upper_bound();
    let spread = (hi - lo).max(f64::MIN_POSITIVE);
    let sigma0 = lo - 1e-3 * spread;
    let h = op.grid().h;
    let tol_zero = 1e-9 * spread;

    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();

    'pairs: for idx in 0..budget {
        let mut rng = ChaCha8Rng::seed_from_u64(0xE160_0000 + idx as u64);
        let mut v = fresh_start(&mut rng, n, &basis)?;
        let mut sigma = sigma0;
        let mut warm = v.clone();
        let mut res_rel = 1.0f64;
        let mut safety = 2.0;
        let mut rho = 0.0;
        let mut converged = false;

        for _ in 0..max_outer {
            let shifted = op.with_constant_shift(-sigma);
            let inner_tol = (0.1 * res_rel).clamp(1e-12, 1e-2);
            match deflated_cg(&shifted, &v, &basis, Some(&warm), inner_tol, 20_000) {
                Ok(out) => {
                    let mut w = out.x;
                    project_out(&mut w, &basis);
                    project_out(&mut w, &basis);
                    let nrm = norm(&w);
                    if !nrm.is_finite() || nrm < 1e-300 {
                        v = fresh_start(&mut rng, n, &basis)?;
                        sigma = sigma0;
                        continue;
                    }
                    for x in &mut w {
                        *x /= nrm;
                    }
                    warm.copy_from_slice(&w);
                    v = w;
                }
                Err(Error::NotPositiveDefinite) => {
                    // Shift crossed an eigenvalue of the deflated operator;
                    // step back and widen the safety margin.
                    sigma -= 0.05 * spread;
                    safety *= 4.0;
                    continue;
                }
                Err(e) => return Err(e),
            }

            let mut av = vec![0.0; n];
            op.apply_slice(&v, &mut av);
            rho = dot(&v, &av);
            project_out(&mut av, &basis);
            for k in 0..n {
                av[k] -= rho * v[k];
            }
            let res_abs = norm(&av);
            res_rel = (res_abs / spread).max(1e-16);

            if res_abs <= tol * rho.abs().max(1e-3 * spread) {
                converged = true;
                break;
            }
            // λ ≥ ρ - res on the deflated complement, so this keeps the
            // shifted operator positive definite while closing the gap.
            let candidate = rho - safety * res_abs - 1e-12 * spread;
            if candidate > sigma {
                sigma = candidate;
            }
        }

        if !converged {
            return Err(Error::NonConvergence {
                iterations: max_outer,
                residual: res_rel,
            });
        }
        basis.push(v.clone());
        pairs.push((rho, v));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        match stop {
            StopRule::FirstNonNegative => {
                if rho > tol_zero {
                    break 'pairs;
                }
            }
            StopRule::Clusters(k) => {
                if count_clusters(&pairs, h) > k {
                    break 'pairs;
                }
            }
        }
    }
    Ok(pairs)
}

fn fresh_start(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for _ in 0..64 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project_out(&mut v, basis);
        project_out(&mut v, basis);
        let nrm = norm(&v);
        if nrm > 1e-8 {
            for x in &mut v {
                *x /= nrm;
            }
            return Ok(v);
        }
    }
    Err(Error::ZeroField)
}

fn cluster_tol(h: f64, lambda: f64) -> f64 {
    (1e-6f64).max(10.0 * h * h) * lambda.abs()
}

fn count_clusters(sorted: &[(f64, Vec<f64>)], h: f64) -> usize {
    let mut count = 0;
    let mut anchor = f64::NEG_INFINITY;
    for (lam, _) in sorted {
        if count == 0 || *lam - anchor > cluster_tol(h, anchor) {
            count += 1;
            anchor = *lam;
        }
    }
    count
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orient so the entry of largest magnitude (first such index) is positive.
fn orient(values: &mut [f64]) {
    let mut best = 0usize;
    for (k, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = k;
        }
    }
    if values[best] < 0.0 {
        for v in values.iter_mut() {
            *v = -*v;
        }
    }
}

/// Lowest `k` eigenvalue clusters (k ≥ 2). `tol` is the relative residual
/// target per eigenpair; `max_iter` bounds the outer iterations each.
pub fn eigs(op: &Operator, k: usize, tol: f64, max_iter: usize) -> Result<Spectrum> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "eigs needs k >= 2 clusters".to_string(),
        ));
    }
    let budget = 2 * k + 6;
    let pairs = eig_engine(op, budget, tol, max_iter, StopRule::Clusters(k))?;
    let grid = Arc::clone(op.grid());
    let h = grid.h;
    let inv_h = 1.0 / h;

    let mut clusters: Vec<EigenCluster> = Vec::new();
    for (lam, mut raw) in pairs {
        let open = clusters
            .last()
            .is_some_and(|c| lam - c.members[0] <= cluster_tol(h, c.members[0]));
        orient(&mut raw);
        // raw vectors are euclidean-normalized; L2 normalization h^2 Σ e^2 = 1.
        for v in &mut raw {
            *v *= inv_h;
        }
        let field = Field::from_values(&grid, raw)?;
        if open {
            let c = clusters.last_mut().unwrap();
            c.members.push(lam);
            c.basis.push(field);
        } else {
            clusters.push(EigenCluster {
                eigenvalue: lam,
                members: vec![lam],
                basis: vec![field],
            });
        }
    }
    for c in &mut clusters {
        c.eigenvalue = c.members.iter().sum::<f64>() / c.members.len() as f64;
    }
    if clusters.len() < k {
        return Err(Error::ClusterMissing(clusters.len(), k));
    }
    clusters.truncate(k);
    Ok(Spectrum { clusters })
}

/// Just the smallest eigenvalue (used by the assumption checks, where the
/// operator may be indefinite).
pub fn smallest_eigenvalue(op: &Operator, tol: f64, max_iter: usize) -> Result<f64> {
    let pairs = eig_engine(op, 1, tol, max_iter, StopRule::Clusters(0))?;
    Ok(pairs[0].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use crate::operator::assemble;

    /// Discrete 1D Dirichlet eigenvalue: m intervals of width h,
    /// μ_k = (4/h²) sin²(kπ / (2m)).
    fn mu(k: u32, m: u32, h: f64) -> f64 {
        let s = (k as f64 * std::f64::consts::PI / (2.0 * m as f64)).sin();
        4.0 / (h * h) * s * s
    }

    #[test]
    fn unit_square_modes() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            8,
        )
        .unwrap();
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let spec = eigs(&op, 2, 1e-10, 400).unwrap();

        let h = g.h;
        let l1 = 2.0 * mu(1, 8, h);
        let l2 = mu(1, 8, h) + mu(2, 8, h);
        assert!((spec.eigenvalue(0) - l1).abs() < 1e-8 * l1);
        assert_eq!(spec.cluster(0).multiplicity(), 1);
        assert!((spec.eigenvalue(1) - l2).abs() < 1e-8 * l2);
        assert_eq!(spec.cluster(1).multiplicity(), 2, "λ2 is a double mode");

        // Orthonormality in L2 across everything computed.
        let all: Vec<&Field> = spec
            .clusters()
            .iter()
            .flat_map(|c| c.basis.iter())
            .collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((a.dot_l2(b) - want).abs() < 1e-7);
            }
        }
        assert!(spec.is_unique_principal());
        assert!(spec.principal().min() >= 0.0);
    }

    #[test]
    fn rectangle_modes_and_projection() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 2.0,
                y0: 0.0,
                y1: 1.0,
            },
            8,
        )
        .unwrap();
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let spec = eigs(&op, 3, 1e-10, 400).unwrap();

        let h = g.h;
        let oracle = [
            mu(1, 16, h) + mu(1, 8, h),
            mu(2, 16, h) + mu(1, 8, h),
            mu(3, 16, h) + mu(1, 8, h),
        ];
        for (i, want) in oracle.iter().enumerate() {
            assert!(
                (spec.eigenvalue(i) - want).abs() < 1e-8 * want,
                "cluster {i}: {} vs {want}",
                spec.eigenvalue(i)
            );
            assert_eq!(spec.cluster(i).multiplicity(), 1);
        }

        // sin(πx/2)sin(πy) is the exact discrete ground mode.
        let pi = std::f64::consts::PI;
        let f = Field::from_fn(&g, |x, y| (pi * x / 2.0).sin() * (pi * y).sin());
        let p0 = spec.project_eigenspace(0, &f).unwrap();
        let err = p0.sub(&f).max_abs() / f.max_abs();
        assert!(err < 1e-7, "projection should reproduce the mode: {err}");
        let p1 = spec.project_eigenspace(1, &f).unwrap();
        assert!(p1.max_abs() < 1e-7 * f.max_abs());
    }

    #[test]
    fn indefinite_spectrum() {
        let g = build_grid(
            Domain::Rectangle {
                x0: -1.0,
                x1: 1.0,
                y0: -1.0,
                y1: 1.0,
            },
            6,
        )
        .unwrap();
        let v = Field::from_fn(&g, |_, _| -10.0);
        let op = assemble(&g, &v).unwrap();
        let spec = eigs(&op, 2, 1e-10, 400).unwrap();
        let want = 2.0 * mu(1, 12, g.h) - 10.0;
        assert!(want < 0.0);
        assert!((spec.eigenvalue(0) - want).abs() < 1e-8 * want.abs());
    }

    #[test]
    fn disk_second_cluster_is_double() {
        let g = build_grid(
            Domain::Disk {
                cx: 0.0,
                cy: 0.0,
                radius: 1.0,
            },
            16,
        )
        .unwrap();
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        let spec = eigs(&op, 2, 1e-9, 600).unwrap();
        assert_eq!(spec.cluster(0).multiplicity(), 1);
        assert_eq!(spec.cluster(1).multiplicity(), 2);
        // continuum ratio j'(1,1)^2 / j(0,1)^2 of Dirichlet disk modes
        let ratio = spec.eigenvalue(1) / spec.eigenvalue(0);
        let want = (3.831706 / 2.404826_f64).powi(2);
        assert!(
            (ratio - want).abs() < 0.05 * want,
            "ratio {ratio} vs {want}"
        );
        assert!(spec.is_unique_principal());
    }

    #[test]
    fn k_validation() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            4,
        )
        .unwrap();
        let v = Field::zeros(&g);
        let op = assemble(&g, &v).unwrap();
        assert!(matches!(
            eigs(&op, 1, 1e-8, 100),
            Err(Error::InvalidParameter(_))
        ));
    }
}
