//! Symmetry classification of computed solutions.
//!
//! Transforms are realized as exact node permutations in lattice-index
//! arithmetic — no floating-point geometry — so applying one is lossless
//! and `u ∘ g` is a relabeling of values. A transform is applicable when
//! the domain supports it geometrically and the sampled potential is
//! invariant under the permutation; then it is an H-isometry and defect
//! scores ‖u∘g ∓ u‖_H / ‖u‖_H classify u as even, odd, or broken.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Domain, Field, Grid};
use crate::operator::{h_norm_sq, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryKind {
    /// Reflection across the vertical centerline x = cx.
    MirrorX,
    /// Reflection across the horizontal centerline y = cy.
    MirrorY,
    /// Reflection across the main diagonal through the center
    /// (squares and disks only).
    Diagonal,
    /// Reflection across the anti-diagonal through the center
    /// (squares and disks only).
    AntiDiagonal,
    /// Point inversion through the center.
    Point,
}

impl SymmetryKind {
    pub fn name(self) -> &'static str {
        match self {
            SymmetryKind::MirrorX => "mirror-x",
            SymmetryKind::MirrorY => "mirror-y",
            SymmetryKind::Diagonal => "diagonal",
            SymmetryKind::AntiDiagonal => "anti-diagonal",
            SymmetryKind::Point => "point",
        }
    }

    pub fn all() -> [SymmetryKind; 5] {
        [
            SymmetryKind::MirrorX,
            SymmetryKind::MirrorY,
            SymmetryKind::Diagonal,
            SymmetryKind::AntiDiagonal,
            SymmetryKind::Point,
        ]
    }
}

/// A domain symmetry realized as a node permutation.
pub struct Transform {
    pub kind: SymmetryKind,
    grid: Arc<Grid>,
    perm: Vec<u32>,
}

impl Transform {
    /// u ∘ g: value at node k is u at the g-image of node k.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if !self.grid.same_layout(u.grid()) {
            return Err(Error::GridMismatch(
                "transform built for a different grid".to_string(),
            ));
        }
        let values = self.perm.iter().map(|&m| u.values()[m as usize]).collect();
        Field::from_values(&self.grid, values)
    }
}

fn diagonal_allowed(domain: &Domain) -> bool {
    match domain {
        Domain::Rectangle { x0, x1, y0, y1 } => ((x1 - x0) - (y1 - y0)).abs() < 1e-12,
        Domain::Disk { .. } => true,
    }
}

/// Build the node permutation for one symmetry, or report that the grid
/// does not support it.
pub fn build_transform(grid: &Arc<Grid>, kind: SymmetryKind) -> Result<Transform> {
    let (nxl, nyl) = grid.lattice_dims();
    if matches!(kind, SymmetryKind::Diagonal | SymmetryKind::AntiDiagonal) {
        if !diagonal_allowed(&grid.domain) || nxl != nyl {
            return Err(Error::NonConformingTransform(kind.name().to_string()));
        }
    }
    let image = |i: u32, j: u32| -> (u32, u32) {
        let (ri, rj) = (nxl - 1 - i, nyl - 1 - j);
        match kind {
            SymmetryKind::MirrorX => (ri, j),
            SymmetryKind::MirrorY => (i, rj),
            SymmetryKind::Point => (ri, rj),
            SymmetryKind::Diagonal => (j, i),
            SymmetryKind::AntiDiagonal => (rj, ri),
        }
    };
    let mut perm = Vec::with_capacity(grid.node_count());
    for node in 0..grid.node_count() {
        let (i, j) = grid.lattice_ij(node);
        let (gi, gj) = image(i, j);
        match grid.node_at(i64::from(gi), i64::from(gj)) {
            Some(m) => perm.push(m as u32),
            None => return Err(Error::NonConformingTransform(kind.name().to_string())),
        }
    }
    Ok(Transform {
        kind,
        grid: Arc::clone(grid),
        perm,
    })
}

/// All transforms the domain supports under which the sampled potential
/// is (numerically exactly) invariant.
pub fn applicable_transforms(grid: &Arc<Grid>, potential: &Field) -> Result<Vec<Transform>> {
    let scale = potential.max_abs().max(1.0);
    let mut out = Vec::new();
    for kind in SymmetryKind::all() {
        let t = match build_transform(grid, kind) {
            Ok(t) => t,
            Err(Error::NonConformingTransform(_)) => continue,
            Err(e) => return Err(e),
        };
        let moved = t.apply(potential)?;
        let defect = moved.sub(potential).max_abs();
        if defect <= 1e-12 * scale {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Broken,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformScore {
    pub transform: &'static str,
    /// ‖u∘g − u‖_H / ‖u‖_H
    pub even_defect: f64,
    /// ‖u∘g + u‖_H / ‖u‖_H
    pub odd_defect: f64,
    pub parity: Parity,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub threshold: f64,
    pub scores: Vec<TransformScore>,
}

impl SymmetryReport {
    pub fn parity_of(&self, kind: SymmetryKind) -> Option<Parity> {
        self.scores
            .iter()
            .find(|s| s.transform == kind.name())
            .map(|s| s.parity)
    }
}

/// Score u against each transform in the H-norm of `op`.
pub fn classify(
    op: &Operator,
    u: &Field,
    transforms: &[Transform],
    threshold: f64,
) -> Result<SymmetryReport> {
    let base = h_norm_sq(op, u)?.sqrt();
    if base <= 0.0 {
        return Err(Error::ZeroField);
    }
    let mut scores = Vec::with_capacity(transforms.len());
    for t in transforms {
        let moved = t.apply(u)?;
        let even_defect = h_norm_sq(op, &moved.sub(u))?.sqrt() / base;
        let odd_defect = h_norm_sq(op, &moved.add(u))?.sqrt() / base;
        let parity = if even_defect <= threshold {
            Parity::Even
        } else if odd_defect <= threshold {
            Parity::Odd
        } else {
            Parity::Broken
        };
        scores.push(TransformScore {
            transform: t.kind.name(),
            even_defect,
            odd_defect,
            parity,
        });
    }
    Ok(SymmetryReport { threshold, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::operator::assemble;
    use std::f64::consts::PI;

    fn rect() -> Arc<Grid> {
        build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 2.0,
                y0: 0.0,
                y1: 1.0,
            },
            8,
        )
        .unwrap()
    }

    #[test]
    fn permutations_are_exact() {
        let g = rect();
        let f = Field::from_fn(&g, |x, y| x + 10.0 * y);
        let t = build_transform(&g, SymmetryKind::MirrorX).unwrap();
        let moved = t.apply(&f).unwrap();
        let want = Field::from_fn(&g, |x, y| (2.0 - x) + 10.0 * y);
        for (a, b) in moved.values().iter().zip(want.values()) {
            assert_eq!(a, b, "index-space reflection must be exact");
        }

        // An involution: applying twice is the identity.
        let back = t.apply(&moved).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rectangle_gating() {
        let g = rect();
        let v0 = Field::zeros(&g);
        let kinds: Vec<_> = applicable_transforms(&g, &v0)
            .unwrap()
            .iter()
            .map(|t| t.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![SymmetryKind::MirrorX, SymmetryKind::MirrorY, SymmetryKind::Point],
            "a non-square rectangle has no diagonal symmetry"
        );

        // A potential that only depends on x kills mirror-x and point.
        let vx = Field::from_fn(&g, |x, _| x);
        let kinds: Vec<_> = applicable_transforms(&g, &vx)
            .unwrap()
            .iter()
            .map(|t| t.kind)
            .collect();
        assert_eq!(kinds, vec![SymmetryKind::MirrorY]);
    }

    #[test]
    fn disk_supports_all_five() {
        let g = build_grid(
            Domain::Disk {
                cx: 0.5,
                cy: -1.0,
                radius: 1.0,
            },
            8,
        )
        .unwrap();
        let v0 = Field::zeros(&g);
        let kinds: Vec<_> = applicable_transforms(&g, &v0)
            .unwrap()
            .iter()
            .map(|t| t.kind)
            .collect();
        assert_eq!(kinds.len(), 5);

        let radial = Field::from_fn(&g, |x, y| 1.0 - (x - 0.5).powi(2) - (y + 1.0).powi(2));
        let op = assemble(&g, &v0).unwrap();
        let ts = applicable_transforms(&g, &v0).unwrap();
        let report = classify(&op, &radial, &ts, 1e-3).unwrap();
        for s in &report.scores {
            assert_eq!(s.parity, Parity::Even, "{} on a radial field", s.transform);
            assert!(s.even_defect < 1e-12);
        }
    }

    #[test]
    fn parity_classification() {
        let g = rect();
        let v0 = Field::zeros(&g);
        let op = assemble(&g, &v0).unwrap();
        let ts = applicable_transforms(&g, &v0).unwrap();

        let even = Field::from_fn(&g, |x, y| (PI * x / 2.0).sin() * (PI * y).sin());
        let report = classify(&op, &even, &ts, 1e-3).unwrap();
        assert_eq!(report.parity_of(SymmetryKind::MirrorX), Some(Parity::Even));
        assert_eq!(report.parity_of(SymmetryKind::MirrorY), Some(Parity::Even));
        assert_eq!(report.parity_of(SymmetryKind::Point), Some(Parity::Even));

        let odd_y = Field::from_fn(&g, |x, y| (PI * x / 2.0).sin() * (2.0 * PI * y).sin());
        let report = classify(&op, &odd_y, &ts, 1e-3).unwrap();
        assert_eq!(report.parity_of(SymmetryKind::MirrorX), Some(Parity::Even));
        assert_eq!(report.parity_of(SymmetryKind::MirrorY), Some(Parity::Odd));
        assert_eq!(report.parity_of(SymmetryKind::Point), Some(Parity::Odd));

        let broken = Field::from_fn(&g, |x, y| {
            (PI * x / 2.0).sin() * (PI * y).sin() * (1.0 + 0.3 * x)
        });
        let report = classify(&op, &broken, &ts, 1e-3).unwrap();
        assert_eq!(report.parity_of(SymmetryKind::MirrorX), Some(Parity::Broken));
        assert_eq!(report.parity_of(SymmetryKind::MirrorY), Some(Parity::Even));
    }

    #[test]
    fn square_diagonals() {
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
        let v0 = Field::zeros(&g);
        let op = assemble(&g, &v0).unwrap();
        let ts = applicable_transforms(&g, &v0).unwrap();
        assert_eq!(ts.len(), 5);

        let sym = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let report = classify(&op, &sym, &ts, 1e-3).unwrap();
        assert_eq!(report.parity_of(SymmetryKind::Diagonal), Some(Parity::Even));
        assert_eq!(
            report.parity_of(SymmetryKind::AntiDiagonal),
            Some(Parity::Even)
        );

        let mixed = Field::from_fn(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let report = classify(&op, &mixed, &ts, 1e-3).unwrap();
        assert_eq!(report.parity_of(SymmetryKind::Diagonal), Some(Parity::Broken));
    }
}
