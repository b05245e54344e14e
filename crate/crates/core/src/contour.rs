//! Level curves of a field by marching squares, and a small SVG renderer.
//!
//! The field is extended by the Dirichlet zero ring (one lattice layer
//! around the masked interior), so level sets close up against the
//! boundary. The ambiguous saddle cells are resolved with the cell
//! average. Segment endpoints live on lattice edges and are stitched into
//! polylines by exact edge identity, so the output is deterministic.

use crate::grid::{Domain, Field};

#[derive(Debug, Clone)]
pub struct ContourLine {
    pub level: f64,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

/// Lattice-edge identity inside the extended (ring-padded) lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EdgeKey {
    i: u32,
    j: u32,
    vertical: bool,
}

struct ExtendedLattice {
    w: u32,
    h: u32,
    values: Vec<f64>,
    x0: f64,
    y0: f64,
    step: f64,
}

impl ExtendedLattice {
    fn build(u: &Field) -> ExtendedLattice {
        // The grid lattice already carries the boundary/exterior ring
        // (vacant positions), which realizes the zero extension.
        let grid = u.grid();
        let (w, h) = grid.lattice_dims();
        let (ox, oy) = grid.lattice_origin();
        let mut values = vec![0.0; (w as usize) * (h as usize)];
        for node in 0..grid.node_count() {
            let (i, j) = grid.lattice_ij(node);
            values[(j as usize) * (w as usize) + i as usize] = u.values()[node];
        }
        ExtendedLattice {
            w,
            h,
            values,
            x0: ox,
            y0: oy,
            step: grid.h,
        }
    }

    fn value(&self, i: u32, j: u32) -> f64 {
        self.values[(j as usize) * (self.w as usize) + i as usize]
    }

    fn point(&self, key: EdgeKey, level: f64) -> (f64, f64) {
        let (va, vb) = if key.vertical {
            (self.value(key.i, key.j), self.value(key.i, key.j + 1))
        } else {
            (self.value(key.i, key.j), self.value(key.i + 1, key.j))
        };
        let t = (va - level) / (va - vb);
        let x = self.x0 + self.step * key.i as f64;
        let y = self.y0 + self.step * key.j as f64;
        if key.vertical {
            (x, y + t * self.step)
        } else {
            (x + t * self.step, y)
        }
    }
}

/// Marching squares over the zero-extended lattice.
pub fn extract_contours(u: &Field, levels: &[f64]) -> Vec<ContourLine> {
    let lat = ExtendedLattice::build(u);
    let mut out = Vec::new();
    for &level in levels {
        let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
        for j in 0..lat.h - 1 {
            for i in 0..lat.w - 1 {
                let s00 = lat.value(i, j) - level;
                let s10 = lat.value(i + 1, j) - level;
                let s11 = lat.value(i + 1, j + 1) - level;
                let s01 = lat.value(i, j + 1) - level;
                let mask = (s00 > 0.0) as u8
                    | ((s10 > 0.0) as u8) << 1
                    | ((s11 > 0.0) as u8) << 2
                    | ((s01 > 0.0) as u8) << 3;
                if mask == 0 || mask == 15 {
                    continue;
                }
                let bottom = EdgeKey {
                    i,
                    j,
                    vertical: false,
                };
                let top = EdgeKey {
                    i,
                    j: j + 1,
                    vertical: false,
                };
                let left = EdgeKey {
                    i,
                    j,
                    vertical: true,
                };
                let right = EdgeKey {
                    i: i + 1,
                    j,
                    vertical: true,
                };
                let center = 0.25 * (s00 + s10 + s11 + s01);
                match mask {
                    1 => segments.push((left, bottom)),
                    2 => segments.push((bottom, right)),
                    3 => segments.push((left, right)),
                    4 => segments.push((top, right)),
                    5 => {
                        if center > 0.0 {
                            segments.push((left, top));
                            segments.push((bottom, right));
                        } else {
                            segments.push((left, bottom));
                            segments.push((top, right));
                        }
                    }
                    6 => segments.push((bottom, top)),
                    7 => segments.push((left, top)),
                    8 => segments.push((left, top)),
                    9 => segments.push((bottom, top)),
                    10 => {
                        if center > 0.0 {
                            segments.push((left, bottom));
                            segments.push((top, right));
                        } else {
                            segments.push((bottom, right));
                            segments.push((left, top));
                        }
                    }
                    11 => segments.push((top, right)),
                    12 => segments.push((left, right)),
                    13 => segments.push((bottom, right)),
                    14 => segments.push((left, bottom)),
                    _ => unreachable!(),
                }
            }
        }
        out.extend(stitch(&lat, level, segments));
    }
    out
}

fn stitch(lat: &ExtendedLattice, level: f64, segments: Vec<(EdgeKey, EdgeKey)>) -> Vec<ContourLine> {
    use std::collections::BTreeMap;
    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(idx);
        adjacency.entry(*b).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // Extend forward from the tail, then backward from the head.
        for dir in 0..2 {
            loop {
                let tip = if dir == 0 { *chain.last().unwrap() } else { chain[0] };
                let next = adjacency
                    .get(&tip)
                    .and_then(|v| v.iter().find(|&&s| !used[s]).copied());
                let Some(seg) = next else { break };
                used[seg] = true;
                let (sa, sb) = segments[seg];
                let other = if sa == tip { sb } else { sa };
                if dir == 0 {
                    chain.push(other);
                } else {
                    chain.insert(0, other);
                }
            }
        }
        let closed = chain.len() > 2 && chain[0] == *chain.last().unwrap();
        let points: Vec<(f64, f64)> = chain.iter().map(|&k| lat.point(k, level)).collect();
        lines.push(ContourLine {
            level,
            points,
            closed,
        });
    }
    lines
}

/// Evenly spaced interior levels for a one-signed field, or symmetric
/// levels plus the nodal line for a sign-changing one.
pub fn default_levels(u: &Field, count: usize) -> Vec<f64> {
    let max = u.max();
    let min = u.min();
    let mut levels = Vec::new();
    if min < 0.0 && max > 0.0 {
        levels.push(0.0);
        for k in 1..=count {
            let f = k as f64 / (count + 1) as f64;
            levels.push(f * max);
            levels.push(f * min);
        }
    } else {
        let (lo, hi) = (min.min(0.0), max.max(0.0));
        for k in 1..=count {
            let f = k as f64 / (count + 1) as f64;
            levels.push(lo + f * (hi - lo));
        }
    }
    levels
}

/// Render contour lines over the domain outline. The y axis is flipped
/// into SVG orientation; floats print in shortest round-trip form, so the
/// output is byte-stable.
pub fn render_svg(domain: &Domain, contours: &[ContourLine]) -> String {
    let (x0, x1, y0, y1) = domain.bounds();
    let span = (x1 - x0).max(y1 - y0);
    let margin = 0.05 * span;
    let flip = |y: f64| y0 + y1 - y;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"640\" height=\"{}\">\n",
        x0 - margin,
        y0 - margin,
        x1 - x0 + 2.0 * margin,
        y1 - y0 + 2.0 * margin,
        (640.0 * (y1 - y0 + 2.0 * margin) / (x1 - x0 + 2.0 * margin)).round()
    ));
    svg.push_str("<rect x=\"-1e9\" y=\"-1e9\" width=\"2e9\" height=\"2e9\" fill=\"white\"/>\n");
    match domain {
        Domain::Rectangle { x0, x1, y0, y1 } => {
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\" stroke-width=\"{}\"/>\n",
                x0,
                y0,
                x1 - x0,
                y1 - y0,
                0.004 * span
            ));
        }
        Domain::Disk { cx, cy, radius } => {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#444\" stroke-width=\"{}\"/>\n",
                cx,
                flip(*cy),
                radius,
                0.004 * span
            ));
        }
    }
    for line in contours {
        if line.points.len() < 2 {
            continue;
        }
        let (color, width) = if line.level == 0.0 {
            ("#000000", 0.006 * span)
        } else if line.level > 0.0 {
            ("#b2182b", 0.003 * span)
        } else {
            ("#2166ac", 0.003 * span)
        };
        let mut d = String::new();
        for (n, (x, y)) in line.points.iter().enumerate() {
            let cmd = if n == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{cmd}{} {} ", x, flip(*y)));
        }
        if line.closed {
            d.push('Z');
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
            d.trim_end(),
            color,
            width
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use std::f64::consts::PI;

    #[test]
    fn bump_contour_closes_around_the_peak() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            24,
        )
        .unwrap();
        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let level = 0.5 * u.max();
        let lines = extract_contours(&u, &[level]);
        assert_eq!(lines.len(), 1, "one closed loop at half height");
        let line = &lines[0];
        assert!(line.closed);

        // Encircles the center: nonzero signed area around (0.5, 0.5).
        let mut area = 0.0;
        for w in line.points.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            area += (x1 - 0.5) * (y2 - 0.5) - (x2 - 0.5) * (y1 - 0.5);
        }
        assert!(area.abs() > 0.1);
        for (x, y) in &line.points {
            assert!(*x > 0.0 && *x < 1.0 && *y > 0.0 && *y < 1.0);
        }
    }

    #[test]
    fn nodal_line_of_a_two_bump_field() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            24,
        )
        .unwrap();
        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let lines = extract_contours(&u, &[0.0]);
        // The zero set is the boundary (Dirichlet data) plus the interior
        // line y = 1/2; every traced point must lie on one of the two.
        let tol = 2.0 * g.h;
        let mut midline_hits = 0usize;
        for line in &lines {
            for (x, y) in &line.points {
                let on_boundary = x.min(1.0 - x).min(y.min(1.0 - y)).abs() < tol;
                let on_midline = (y - 0.5).abs() < tol;
                assert!(
                    on_boundary || on_midline,
                    "stray zero-level point at ({x}, {y})"
                );
                if on_midline && *x > 0.2 && *x < 0.8 && !on_boundary {
                    midline_hits += 1;
                }
            }
        }
        assert!(
            midline_hits >= 10,
            "nodal line near y = 1/2 should be traced, got {midline_hits} points"
        );
    }

    #[test]
    fn default_levels_cover_both_signs() {
        let g = build_grid(
            Domain::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            12,
        )
        .unwrap();
        let u = Field::from_fn(&g, |x, y| (PI * x).sin() * (2.0 * PI * y).sin());
        let levels = default_levels(&u, 4);
        assert!(levels.contains(&0.0));
        assert!(levels.iter().any(|l| *l > 0.0) && levels.iter().any(|l| *l < 0.0));

        let bump = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let levels = default_levels(&bump, 4);
        assert_eq!(levels.len(), 4);
        assert!(levels.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn svg_output_is_stable() {
        let g = build_grid(
            Domain::Disk {
                cx: 0.0,
                cy: 0.0,
                radius: 1.0,
            },
            12,
        )
        .unwrap();
        let u = Field::from_fn(&g, |x, y| 1.0 - x * x - y * y);
        let lines = extract_contours(&u, &default_levels(&u, 3));
        let a = render_svg(&g.domain, &lines);
        let b = render_svg(&g.domain, &lines);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("<circle"));
        assert!(a.ends_with("</svg>\n"));
    }
}
