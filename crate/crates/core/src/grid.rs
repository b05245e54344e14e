//! Domain discretization: interior-node lattices with Dirichlet masking,
//! field storage and midpoint quadrature.
//!
//! A grid is a uniform Cartesian lattice of spacing `h = 1/resolution`
//! restricted to the nodes strictly inside the domain. Values outside the
//! interior mask are implicitly zero (Dirichlet extension). Each interior
//! node carries the quadrature weight `h^2`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;

const VACANT: u32 = u32::MAX;

/// The computational domain Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disk { cx: f64, cy: f64, radius: f64 },
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Rectangle { x0, x1, y0, y1 } => {
                if !(x0 < x1 && y0 < y1) {
                    return Err(Error::DegenerateDomain(format!(
                        "rectangle requires x0 < x1 and y0 < y1, got [{x0}, {x1}] x [{y0}, {y1}]"
                    )));
                }
            }
            Domain::Disk { radius, .. } => {
                if !(radius > 0.0) {
                    return Err(Error::DegenerateDomain(format!(
                        "disk requires radius > 0, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bounding box (x_min, x_max, y_min, y_max).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Domain::Rectangle { x0, x1, y0, y1 } => (x0, x1, y0, y1),
            Domain::Disk { cx, cy, radius } => (cx - radius, cx + radius, cy - radius, cy + radius),
        }
    }

    fn contains_strictly(&self, x: f64, y: f64) -> bool {
        match *self {
            Domain::Rectangle { x0, x1, y0, y1 } => x > x0 && x < x1 && y > y0 && y < y1,
            Domain::Disk { cx, cy, radius } => {
                (x - cx) * (x - cx) + (y - cy) * (y - cy) < radius * radius
            }
        }
    }
}

/// Interior-node lattice over a [`Domain`] with Dirichlet masking.
pub struct Grid {
    pub domain: Domain,
    /// Lattice spacing.
    pub h: f64,
    /// Nodes per unit length (h = 1/resolution).
    pub resolution: u32,
    /// Lattice extents including the boundary ring: indices 0..nx_lattice.
    nx_lattice: u32,
    ny_lattice: u32,
    /// Lattice origin (index (0,0) coordinate).
    origin_x: f64,
    origin_y: f64,
    /// Interior node coordinates in row-major order (j outer, i inner).
    coords: Vec<(f64, f64)>,
    /// Lattice indices of each interior node.
    lattice_ij: Vec<(u32, u32)>,
    /// (i, j) -> interior node index, VACANT for boundary/exterior.
    index_map: Vec<u32>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("domain", &self.domain)
            .field("h", &self.h)
            .field("nodes", &self.coords.len())
            .finish()
    }
}

/// Build the interior-node grid with `resolution` lattice intervals per unit
/// length (`h = 1/resolution`).
pub fn build_grid(domain: Domain, resolution: u32) -> Result<Arc<Grid>> {
    domain.validate()?;
    if resolution == 0 {
        return Err(Error::InvalidParameter(
            "resolution must be positive".to_string(),
        ));
    }
    let h = 1.0 / f64::from(resolution);
    let (bx0, bx1, by0, by1) = domain.bounds();

    // Number of lattice intervals across the bounding box. Conforming boxes
    // (integer multiples of h) get snapped so the far boundary is a lattice
    // line; anything else is truncated to the last interior line.
    let spans = |lo: f64, hi: f64| -> u32 {
        let exact = (hi - lo) * f64::from(resolution);
        let rounded = exact.round();
        if (exact - rounded).abs() < 1e-9 {
            rounded as u32
        } else {
            exact.floor() as u32
        }
    };
    let mx = spans(bx0, bx1);
    let my = spans(by0, by1);
    if mx < 2 || my < 2 {
        return Err(Error::DegenerateDomain(format!(
            "domain admits no interior nodes at resolution {resolution}"
        )));
    }

    let nx_lattice = mx + 1;
    let ny_lattice = my + 1;
    let mut index_map = vec![VACANT; (nx_lattice as usize) * (ny_lattice as usize)];
    let mut coords = Vec::new();
    let mut lattice_ij = Vec::new();

    for j in 1..my {
        let y = by0 + f64::from(j) * h;
        for i in 1..mx {
            let x = bx0 + f64::from(i) * h;
            if domain.contains_strictly(x, y) {
                let node = coords.len() as u32;
                index_map[(j as usize) * (nx_lattice as usize) + i as usize] = node;
                coords.push((x, y));
                lattice_ij.push((i, j));
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::DegenerateDomain(format!(
            "domain admits no interior nodes at resolution {resolution}"
        )));
    }

    Ok(Arc::new(Grid {
        domain,
        h,
        resolution,
        nx_lattice,
        ny_lattice,
        origin_x: bx0,
        origin_y: by0,
        coords,
        lattice_ij,
        index_map,
    }))
}

impl Grid {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// Quadrature weight of every interior node (composite midpoint).
    pub fn weight(&self) -> f64 {
        self.h * self.h
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn lattice_ij(&self, node: usize) -> (u32, u32) {
        self.lattice_ij[node]
    }

    /// Lattice extents including the boundary ring.
    pub fn lattice_dims(&self) -> (u32, u32) {
        (self.nx_lattice, self.ny_lattice)
    }

    pub fn lattice_origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    /// Interior node index at lattice position (i, j), if any.
    pub fn node_at(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i >= i64::from(self.nx_lattice) || j >= i64::from(self.ny_lattice) {
            return None;
        }
        let v = self.index_map[(j as usize) * (self.nx_lattice as usize) + i as usize];
        (v != VACANT).then_some(v as usize)
    }

    /// The four lattice neighbors of an interior node (None = Dirichlet).
    pub fn neighbors(&self, node: usize) -> [Option<usize>; 4] {
        let (i, j) = self.lattice_ij[node];
        let (i, j) = (i64::from(i), i64::from(j));
        [
            self.node_at(i - 1, j),
            self.node_at(i + 1, j),
            self.node_at(i, j - 1),
            self.node_at(i, j + 1),
        ]
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.domain == other.domain
            && self.resolution == other.resolution
            && self.coords.len() == other.coords.len()
    }
}

/// A real-valued function sampled on the interior nodes of a grid.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("len", &self.values.len())
            .finish()
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Field {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let values = grid.coords.iter().map(|&(x, y)| f(x, y)).collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::GridMismatch(
                "fields live on different grids".to_string(),
            ));
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &Field) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Plain (unweighted) dot product; deterministic sequential order.
    pub fn dot_raw(&self, other: &Field) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        acc
    }

    /// L2 inner product with the quadrature weight: h^2 * sum(u v).
    pub fn dot_l2(&self, other: &Field) -> f64 {
        self.grid.weight() * self.dot_raw(other)
    }

    pub fn norm_l2_sq(&self) -> f64 {
        self.dot_l2(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Positive part max(u, 0) and negative part min(u, 0).
    pub fn split_parts(&self) -> (Field, Field) {
        let plus = Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| v.max(0.0)).collect(),
        };
        let minus = Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| v.min(0.0)).collect(),
        };
        (plus, minus)
    }
}

/// Integral of `f` over Ω by the composite midpoint rule on the mask.
pub fn integrate(f: &Field) -> f64 {
    let mut acc = 0.0;
    for v in f.values() {
        acc += *v;
    }
    f.grid().weight() * acc
}

/// Integral of |u|^p.
pub fn lp_integral(u: &Field, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lp_integral requires p > 1, got {p}"
        )));
    }
    let mut acc = 0.0;
    for v in u.values() {
        acc += v.abs().powf(p);
    }
    Ok(u.grid().weight() * acc)
}

/// A node whose expression value was taken at a micro-offset point because
/// direct evaluation hit a singularity.
#[derive(Debug, Clone, Serialize)]
pub struct Substitution {
    pub node: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug)]
pub struct Sampled {
    pub field: Field,
    pub substitutions: Vec<Substitution>,
}

/// Sample an expression on every interior node. Evaluation failures
/// (singular potentials) retry at `(x + h*regularization, y + h*regularization)`
/// and the substituted node is recorded.
pub fn sample(e: &Expr, grid: &Arc<Grid>, regularization: f64) -> Result<Sampled> {
    let mut values = Vec::with_capacity(grid.node_count());
    let mut substitutions = Vec::new();
    let eps = grid.h * regularization;
    for (node, &(x, y)) in grid.coords().iter().enumerate() {
        match e.eval(x, y) {
            Ok(v) => values.push(v),
            Err(first) => {
                if eps > 0.0 {
                    match e.eval(x + eps, y + eps) {
                        Ok(v) => {
                            values.push(v);
                            substitutions.push(Substitution { node, x, y });
                        }
                        Err(err) => {
                            return Err(Error::SamplingFailed {
                                x,
                                y,
                                source: Box::new(err),
                            })
                        }
                    }
                } else {
                    return Err(Error::SamplingFailed {
                        x,
                        y,
                        source: Box::new(first),
                    });
                }
            }
        }
    }
    Ok(Sampled {
        field: Field {
            grid: Arc::clone(grid),
            values,
        },
        substitutions,
    })
}

/// Sampling with the standard micro-offset factor 1e-3.
pub fn sample_default(e: &Expr, grid: &Arc<Grid>) -> Result<Sampled> {
    sample(e, grid, 1e-3)
}

/// Write a field as CSV (`x,y,value`), rows in deterministic node order.
/// Floats use the shortest round-trip decimal form.
pub fn write_field_csv<W: std::io::Write>(field: &Field, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,y,value")?;
    for (&(x, y), v) in field.grid().coords().iter().zip(field.values()) {
        writeln!(out, "{x},{y},{v}")?;
    }
    Ok(())
}

/// Read a field CSV produced by [`write_field_csv`] back onto a grid,
/// verifying the node coordinates match.
pub fn read_field_csv<R: std::io::BufRead>(grid: &Arc<Grid>, reader: R) -> Result<Field> {
    let mut values = Vec::with_capacity(grid.node_count());
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == "x,y,value" => {}
        _ => {
            return Err(Error::InvalidParameter(
                "field CSV must start with the header `x,y,value`".to_string(),
            ))
        }
    }
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::InvalidParameter(format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("bad CSV row {}", idx + 2)))
        };
        let x = parse(parts.next())?;
        let y = parse(parts.next())?;
        let v = parse(parts.next())?;
        let node = values.len();
        if node >= grid.node_count() {
            return Err(Error::GridMismatch("CSV has more rows than grid nodes".to_string()));
        }
        let (gx, gy) = grid.coords()[node];
        if (x - gx).abs() > 1e-9 || (y - gy).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!(
                "CSV row {} at ({x}, {y}) does not match grid node at ({gx}, {gy})",
                idx + 2
            )));
        }
        values.push(v);
    }
    if values.len() != grid.node_count() {
        return Err(Error::GridMismatch(format!(
            "CSV has {} rows, grid has {} nodes",
            values.len(),
            grid.node_count()
        )));
    }
    Ok(Field {
        grid: Arc::clone(grid),
        values,
    })
}
