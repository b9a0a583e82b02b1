//! Built-in synthetic geometries: structured squares (optionally painted
//! with scars and border zones, optionally metric-stretched) and annuli.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{Mesh, TissueId};

pub const HEALTHY: TissueId = 0;
pub const BORDER_ZONE: TissueId = 1;
pub const SCAR: TissueId = 2;

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Rect { min, max }
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        p[0] >= self.min[0] - tol
            && p[0] <= self.max[0] + tol
            && p[1] >= self.min[1] - tol
            && p[1] <= self.max[1] + tol
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    fn inside_square(&self, side: f64) -> bool {
        self.min[0] >= 0.0
            && self.min[1] >= 0.0
            && self.max[0] <= side
            && self.max[1] <= side
            && self.min[0] <= self.max[0]
            && self.min[1] <= self.max[1]
    }
}

/// Scar and border-zone boxes painted over healthy tissue. Scars win where
/// the two overlap.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScarLayout {
    #[serde(default)]
    pub scars: Vec<Rect>,
    #[serde(default)]
    pub border_zones: Vec<Rect>,
}

impl ScarLayout {
    /// Two equal scars side by side, centered in the square, separated by a
    /// border-zone corridor of the same height.
    pub fn two_scars_with_corridor(side: f64, scar_w: f64, scar_h: f64, corridor: f64) -> Self {
        let x0 = 0.5 * (side - 2.0 * scar_w - corridor);
        let y0 = 0.5 * (side - scar_h);
        let y1 = y0 + scar_h;
        ScarLayout {
            scars: vec![
                Rect::new([x0, y0], [x0 + scar_w, y1]),
                Rect::new([x0 + scar_w + corridor, y0], [x0 + 2.0 * scar_w + corridor, y1]),
            ],
            border_zones: vec![Rect::new([x0 + scar_w, y0], [x0 + scar_w + corridor, y1])],
        }
    }

    fn tissue_at(&self, p: &Vec3, tol: f64) -> TissueId {
        if self.scars.iter().any(|r| r.contains(p, tol)) {
            SCAR
        } else if self.border_zones.iter().any(|r| r.contains(p, tol)) {
            BORDER_ZONE
        } else {
            HEALTHY
        }
    }
}

/// Linear map `ξ = T x` from physical coordinates to a reference frame in
/// which the generated lattice is equilateral.
///
/// When `T` is proportional to `D^{-1/2}` the pushed-forward metric is the
/// identity, so every triangle is metric-acute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stretch(pub [[f64; 2]; 2]);

impl Stretch {
    pub fn diag(a: f64, b: f64) -> Self {
        Stretch([[a, 0.0], [0.0, b]])
    }

    /// `cv_l · D^{-1/2}`: unit along the fiber, `cv_l / cv_t` across it.
    pub fn for_metric(cv_l: f64, cv_t: f64, fiber: [f64; 2]) -> Self {
        let k = cv_l / cv_t;
        let [fx, fy] = fiber;
        Stretch([
            [k + (1.0 - k) * fx * fx, (1.0 - k) * fx * fy],
            [(1.0 - k) * fx * fy, k + (1.0 - k) * fy * fy],
        ])
    }

    fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]
    }

    fn apply_inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        let d = self.det();
        [
            (m[1][1] * p[0] - m[0][1] * p[1]) / d,
            (-m[1][0] * p[0] + m[0][0] * p[1]) / d,
        ]
    }

    fn min_singular_value(&self) -> f64 {
        let m = &self.0;
        // eigenvalues of TᵀT
        let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
        let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
        let c = m[0][1] * m[0][1] + m[1][1] * m[1][1];
        let tr = a + c;
        let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
        (0.5 * (tr - disc)).max(0.0).sqrt()
    }
}

/// Structured mesh of the square `[0, side]²`.
///
/// Without a stretch this is the right-triangle grid with `(n+1)²` nodes and
/// `2n²` triangles, `n = round(side / h)`, every cell split along its
/// lower-left to upper-right diagonal. With a stretch `T`, an equilateral
/// lattice is laid out in the frame `ξ = T x` with spacing chosen so that
/// physical edges are at most `h`; triangles with a vertex outside the
/// square are dropped.
///
/// Fibers are `[1, 0]`; nodes are labelled by `layout` (healthy elsewhere).
pub fn generate_structured_square(
    side: f64,
    h: f64,
    layout: Option<&ScarLayout>,
    stretch: Option<Stretch>,
) -> Result<Mesh> {
    if !(side > 0.0) || !(h > 0.0) || !(h < side) {
        return Err(Error::Domain(format!(
            "need side > 0 and 0 < h < side, got side = {side}, h = {h}"
        )));
    }
    if let Some(layout) = layout {
        for r in layout.scars.iter().chain(&layout.border_zones) {
            if !r.inside_square(side) {
                return Err(Error::Domain(format!(
                    "layout box {:?}..{:?} lies outside the {side} cm square",
                    r.min, r.max
                )));
            }
        }
    }
    let (nodes, triangles) = match stretch {
        None => right_triangle_grid(side, h),
        Some(s) => {
            if s.det().abs() < 1e-12 {
                return Err(Error::Domain("stretch map is singular".into()));
            }
            stretched_lattice(side, h, &s)
        }
    };
    let tol = 1e-9 * side;
    let tissue = nodes
        .iter()
        .map(|p| layout.map_or(HEALTHY, |l| l.tissue_at(p, tol)))
        .collect();
    let fibers = vec![[1.0, 0.0, 0.0]; triangles.len()];
    Mesh::new(2, nodes, triangles, fibers, tissue)
}

fn right_triangle_grid(side: f64, h: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let n = ((side / h).round() as usize).max(1);
    let step = side / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * step, j as f64 * step, 0.0]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    (nodes, triangles)
}

fn stretched_lattice(side: f64, h: f64, t: &Stretch) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let spacing = h * t.min_singular_value();
    let row_h = spacing * 3f64.sqrt() / 2.0;
    let corners = [[0.0, 0.0], [side, 0.0], [0.0, side], [side, side]].map(|c| t.apply(c));
    let lo = [
        corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min),
        corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min),
    ];
    let hi = [
        corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max),
        corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max),
    ];
    let cols = ((hi[0] - lo[0]) / spacing).ceil() as usize + 3;
    let rows = ((hi[1] - lo[1]) / row_h).ceil() as usize + 3;
    let origin = [lo[0] - spacing, lo[1] - row_h];

    let tol = 1e-9 * side;
    let inside = |p: [f64; 2]| {
        p[0] >= -tol && p[0] <= side + tol && p[1] >= -tol && p[1] <= side + tol
    };
    let mut phys = Vec::with_capacity(rows * cols);
    for k in 0..rows {
        let shift = if k % 2 == 1 { 0.5 } else { 0.0 };
        for i in 0..cols {
            let xi = [
                origin[0] + (i as f64 + shift) * spacing,
                origin[1] + k as f64 * row_h,
            ];
            let mut p = t.apply_inverse(xi);
            // snap round-off so boundary nodes stay inside
            for c in &mut p {
                if c.abs() < tol {
                    *c = 0.0;
                } else if (*c - side).abs() < tol {
                    *c = side;
                }
            }
            phys.push(p);
        }
    }
    let id = |k: usize, i: usize| k * cols + i;
    let mut raw = Vec::new();
    for k in 0..rows - 1 {
        for i in 0..cols - 1 {
            let cand = if k % 2 == 0 {
                [
                    [id(k, i), id(k, i + 1), id(k + 1, i)],
                    [id(k, i + 1), id(k + 1, i + 1), id(k + 1, i)],
                ]
            } else {
                [
                    [id(k, i), id(k + 1, i + 1), id(k + 1, i)],
                    [id(k, i), id(k, i + 1), id(k + 1, i + 1)],
                ]
            };
            for tri in cand {
                if tri.iter().all(|&v| inside(phys[v])) {
                    raw.push(tri);
                }
            }
        }
    }
    // keep orientation counter-clockwise in physical space
    let flip = t.det() < 0.0;
    let mut remap = vec![usize::MAX; phys.len()];
    let mut nodes = Vec::new();
    let mut triangles = Vec::with_capacity(raw.len());
    for tri in raw {
        let mut out = [0; 3];
        for (slot, &v) in out.iter_mut().zip(&tri) {
            if remap[v] == usize::MAX {
                remap[v] = nodes.len();
                nodes.push([phys[v][0], phys[v][1], 0.0]);
            }
            *slot = remap[v];
        }
        if flip {
            out.swap(1, 2);
        }
        triangles.push(out);
    }
    (nodes, triangles)
}

/// Structured annulus centered at the origin.
///
/// Every ring carries the same number of nodes, chosen so that arc edges on
/// the outer ring are at most `h`. Fibers are circumferential.
pub fn generate_annulus(r_inner: f64, r_outer: f64, h: f64) -> Result<Mesh> {
    if !(r_inner > 0.0) || !(r_outer > r_inner) || !(h > 0.0) {
        return Err(Error::Domain(format!(
            "need 0 < r_inner < r_outer and h > 0, got {r_inner}, {r_outer}, {h}"
        )));
    }
    let layers = ((r_outer - r_inner) / h).ceil().max(1.0) as usize;
    let sectors = ((std::f64::consts::TAU * r_outer / h).ceil() as usize).max(8);
    let idx = |k: usize, j: usize| k * sectors + (j % sectors);
    let mut nodes = Vec::with_capacity((layers + 1) * sectors);
    for k in 0..=layers {
        let r = r_inner + (r_outer - r_inner) * k as f64 / layers as f64;
        for j in 0..sectors {
            let a = std::f64::consts::TAU * j as f64 / sectors as f64;
            nodes.push([r * a.cos(), r * a.sin(), 0.0]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * layers * sectors);
    for k in 0..layers {
        for j in 0..sectors {
            let (a, b, c, d) = (idx(k, j), idx(k, j + 1), idx(k + 1, j + 1), idx(k + 1, j));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let fibers = triangles
        .iter()
        .map(|tri| {
            let cx = tri.iter().map(|&v| nodes[v][0]).sum::<f64>() / 3.0;
            let cy = tri.iter().map(|&v| nodes[v][1]).sum::<f64>() / 3.0;
            let r = (cx * cx + cy * cy).sqrt();
            [-cy / r, cx / r, 0.0]
        })
        .collect();
    Mesh::new(2, nodes, triangles, fibers, vec![HEALTHY; (layers + 1) * sectors])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{acuteness_audit, MetricField};

    #[test]
    fn tiny_square_counts() {
        let m = generate_structured_square(1.0, 0.5, None, None).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.triangle_count(), 8);
    }

    #[test]
    fn fifteen_cm_square_counts() {
        let m = generate_structured_square(15.0, 0.05, None, None).unwrap();
        // n = 300: (n+1)² nodes, 2n² triangles
        assert_eq!(m.node_count(), 301 * 301);
        assert_eq!(m.triangle_count(), 2 * 300 * 300);
    }

    #[test]
    fn bad_arguments() {
        assert!(generate_structured_square(1.0, 1.0, None, None).is_err());
        assert!(generate_structured_square(-1.0, 0.1, None, None).is_err());
        let layout = ScarLayout {
            scars: vec![Rect::new([14.0, 0.0], [16.0, 1.0])],
            border_zones: vec![],
        };
        assert!(matches!(
            generate_structured_square(15.0, 0.5, Some(&layout), None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn scar_layout_histogram() {
        let h = 0.05;
        let layout = ScarLayout::two_scars_with_corridor(15.0, 5.0, 3.0, 1.0);
        let m = generate_structured_square(15.0, h, Some(&layout), None).unwrap();
        let count = |id| m.tissue().iter().filter(|&&t| t == id).count() as f64;
        let cell = h * h;
        // node counts times cell area against prescribed areas, one cell layer of slack
        let scar_area: f64 = layout.scars.iter().map(Rect::area).sum();
        let scar_perimeter = 2.0 * 2.0 * (5.0 + 3.0);
        assert!((count(SCAR) * cell - scar_area).abs() <= scar_perimeter * h);
        let bz = layout.border_zones[0];
        // the corridor's vertical sides belong to the scars
        assert!((count(BORDER_ZONE) * cell - bz.area()).abs() <= 2.0 * (1.0 + 3.0) * h);
        assert_eq!(count(HEALTHY) + count(SCAR) + count(BORDER_ZONE), m.node_count() as f64);
    }

    #[test]
    fn stretch_for_metric_matches_diag() {
        let s = Stretch::for_metric(1.0, 0.5, [1.0, 0.0]);
        assert_eq!(s, Stretch::diag(1.0, 2.0));
    }

    #[test]
    fn stretched_grid_is_more_acute() {
        let plain = generate_structured_square(1.0, 0.05, None, None).unwrap();
        let stretched = generate_structured_square(1.0, 0.05, None, Some(Stretch::diag(1.0, 2.0))).unwrap();
        let audit = |m: &Mesh| acuteness_audit(m, &MetricField::uniform(m, 1.0, 0.5).unwrap());
        let a = audit(&plain).failure_fraction;
        let b = audit(&stretched).failure_fraction;
        assert!(b < a, "stretched {b} vs plain {a}");
        assert_eq!(b, 0.0);
    }

    #[test]
    fn stretched_diagonal_fiber_is_metric_acute() {
        let cl = 0.065;
        let ct = 0.33 * cl;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let stretch = Stretch::for_metric(cl, ct, [s, s]);
        let mut m = generate_structured_square(1.0, 0.05, None, Some(stretch)).unwrap();
        m.set_fibers(vec![[s, s, 0.0]; m.triangle_count()]).unwrap();
        let report = acuteness_audit(&m, &MetricField::uniform(&m, cl, ct).unwrap());
        assert_eq!(report.failures, 0);
        for p in m.nodes() {
            assert!(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0);
        }
        // longest physical edge never exceeds h
        for t in 0..m.triangle_count() {
            let p = m.triangle_points(t);
            for i in 0..3 {
                let e = crate::geom::sub(&p[(i + 1) % 3], &p[i]);
                assert!(crate::geom::norm(&e) <= 0.05 * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn annulus_containment_and_topology() {
        let m = generate_annulus(2.0, 2.5, 0.05).unwrap();
        for p in m.nodes() {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((2.0 - 1e-9..=2.5 + 1e-9).contains(&r), "{r}");
        }
        assert_eq!(m.euler_characteristic(), 0);
        let mean = std::f64::consts::TAU * 2.25;
        assert!((mean - 14.137).abs() < 1e-3);
    }
}
