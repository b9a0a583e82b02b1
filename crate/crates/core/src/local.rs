//! Closed-form local solver for the discrete Hopf-Lax update.
//!
//! For a triangle `(x, y1, y2)` with known arrival times at `y1` and `y2`,
//! the candidate time at `x` is
//!
//! ```text
//! min_{s ∈ [0,1]}  φ1 + s (φ2 − φ1) + sqrt(d(s)ᵀ M d(s)),   d(s) = x − y1 − s (y2 − y1)
//! ```
//!
//! where `M = D⁻¹`. Stationarity of the objective reduces to a quadratic in
//! `s` with a single admissible root; the objective is convex, so the root
//! (when it falls inside `[0, 1]`) and the two endpoints cover every case.

use crate::adjacency::Adjacency;
use crate::geom::{self, Mat3, Vec3};
use crate::mesh::Mesh;

/// Relative size of `A − δ²` below which the stationary point is treated as
/// numerically undefined.
const DEGENERATE_LEAD: f64 = 1e-14;

/// One triangle update: target `x`, opposite edge `y1 y2`.
#[derive(Debug, Clone, Copy)]
pub struct LocalUpdateProblem<'a> {
    pub x: Vec3,
    pub y1: Vec3,
    pub y2: Vec3,
    pub phi1: f64,
    pub phi2: f64,
    pub inv_metric: &'a Mat3,
}

/// `φ(y) + sqrt((x − y)ᵀ M (x − y))`.
#[inline]
pub fn edge_update(x: &Vec3, y: &Vec3, phi_y: f64, inv_metric: &Mat3) -> f64 {
    let d = geom::sub(x, y);
    phi_y + geom::bilinear(&d, inv_metric, &d).sqrt()
}

#[inline]
fn objective(p: &LocalUpdateProblem<'_>, a: &Vec3, b: &Vec3, s: f64) -> f64 {
    let d = geom::sub(a, &geom::scale(b, s));
    p.phi1 + s * (p.phi2 - p.phi1) + geom::bilinear(&d, p.inv_metric, &d).max(0.0).sqrt()
}

/// Minimizes the interpolated Hopf-Lax objective over the opposite edge.
///
/// An infinite `φ` on one side reduces exactly to the edge update from the
/// other side; both infinite yields `+∞`.
pub fn triangle_update(p: &LocalUpdateProblem<'_>) -> f64 {
    let inf1 = p.phi1 == f64::INFINITY;
    let inf2 = p.phi2 == f64::INFINITY;
    match (inf1, inf2) {
        (true, true) => return f64::INFINITY,
        (false, true) => return edge_update(&p.x, &p.y1, p.phi1, p.inv_metric),
        (true, false) => return edge_update(&p.x, &p.y2, p.phi2, p.inv_metric),
        (false, false) => {}
    }

    let end0 = edge_update(&p.x, &p.y1, p.phi1, p.inv_metric);
    let end1 = edge_update(&p.x, &p.y2, p.phi2, p.inv_metric);
    let mut best = end0.min(end1);

    let a = geom::sub(&p.x, &p.y1);
    let b = geom::sub(&p.y2, &p.y1);
    let m = p.inv_metric;
    let aa = geom::bilinear(&b, m, &b);
    let bb = geom::bilinear(&a, m, &b);
    let cc = geom::bilinear(&a, m, &a);
    let delta = p.phi2 - p.phi1;
    let gap = aa - delta * delta;

    if gap > DEGENERATE_LEAD * aa {
        let disc = ((aa * cc - bb * bb) / gap).max(0.0);
        let s = (bb - delta * disc.sqrt()) / aa;
        if s > 0.0 && s < 1.0 {
            best = best.min(objective(p, &a, &b, s));
        }
    } else if gap > -DEGENERATE_LEAD * aa {
        best = best.min(golden_section(p, &a, &b));
    }
    best
}

fn golden_section(p: &LocalUpdateProblem<'_>, a: &Vec3, b: &Vec3) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = objective(p, a, b, c);
    let mut fd = objective(p, a, b, d);
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = objective(p, a, b, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = objective(p, a, b, d);
        }
    }
    fc.min(fd)
}

/// The two vertices of `tri` other than `x`, in cyclic order after `x`.
#[inline]
pub fn opposite(tri: [usize; 3], x: usize) -> (usize, usize) {
    if tri[0] == x {
        (tri[1], tri[2])
    } else if tri[1] == x {
        (tri[2], tri[0])
    } else {
        (tri[0], tri[1])
    }
}

#[inline]
fn triangle_candidate(
    mesh: &Mesh,
    x: usize,
    t: usize,
    values: &impl Fn(usize) -> f64,
    inv: &Mat3,
) -> f64 {
    let (y1, y2) = opposite(mesh.triangle(t), x);
    let (phi1, phi2) = (values(y1), values(y2));
    if phi1 == f64::INFINITY && phi2 == f64::INFINITY {
        return f64::INFINITY;
    }
    triangle_update(&LocalUpdateProblem {
        x: *mesh.node(x),
        y1: *mesh.node(y1),
        y2: *mesh.node(y2),
        phi1,
        phi2,
        inv_metric: inv,
    })
}

/// Minimum triangle update over the whole one-ring `T(x)`.
///
/// `values(y)` yields the known time of `y` (`+∞` if unknown); `metric(t)`
/// yields the inverse metric of triangle `t` for updates of `x`, or `None`
/// when the triangle does not conduct.
pub fn node_update(
    x: usize,
    mesh: &Mesh,
    adjacency: &Adjacency,
    values: impl Fn(usize) -> f64,
    mut metric: impl FnMut(usize) -> Option<Mat3>,
) -> f64 {
    let mut best = f64::INFINITY;
    for &t in adjacency.triangles_of(x) {
        if let Some(inv) = metric(t) {
            best = best.min(triangle_candidate(mesh, x, t, &values, &inv));
        }
    }
    best
}

/// Minimum triangle update over `T(x, source)` only: the triangles whose
/// candidate can change when `source` becomes known.
pub fn pair_update(
    x: usize,
    source: usize,
    mesh: &Mesh,
    adjacency: &Adjacency,
    values: impl Fn(usize) -> f64,
    mut metric: impl FnMut(usize) -> Option<Mat3>,
) -> f64 {
    let mut best = f64::INFINITY;
    for &t in adjacency.shared_triangles(x, source) {
        if let Some(inv) = metric(t) {
            best = best.min(triangle_candidate(mesh, x, t, &values, &inv));
        }
    }
    best
}

/// Edge-only candidate from `source`, the cheapest over the conducting
/// triangles that carry the edge.
pub fn pair_edge_update(
    x: usize,
    source: usize,
    phi_source: f64,
    mesh: &Mesh,
    adjacency: &Adjacency,
    mut metric: impl FnMut(usize) -> Option<Mat3>,
) -> f64 {
    let mut best = f64::INFINITY;
    for &t in adjacency.shared_triangles(x, source) {
        if let Some(inv) = metric(t) {
            best = best.min(edge_update(mesh.node(x), mesh.node(source), phi_source, &inv));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::build_adjacency;
    use crate::metric::inverse_metric;
    use proptest::prelude::*;

    const DIAG_4_1: Mat3 = [[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn unit_edge() {
        assert_eq!(edge_update(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0, &geom::IDENTITY), 1.0);
    }

    #[test]
    fn axis_aligned_metric_edge() {
        assert_eq!(edge_update(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0, &DIAG_4_1), 2.0);
    }

    #[test]
    fn diagonal_fiber_edge_matches_formula() {
        let cl = 0.065;
        let ct = 0.33 * cl;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let inv = inverse_metric(cl, ct, &[s, s, 0.0]);
        let got = edge_update(&[0.05, 0.0, 0.0], &[0.0; 3], 0.0, &inv);
        // split (0.05, 0) into fiber and cross-fiber parts: 0.05/√2 each
        let along = 0.05 * s;
        let across = 0.05 * s;
        let want = ((along / cl).powi(2) + (across / ct).powi(2)).sqrt();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn planar_front_apex() {
        let p = LocalUpdateProblem {
            x: [0.0, 1.0, 0.0],
            y1: [-0.5, 0.0, 0.0],
            y2: [0.5, 0.0, 0.0],
            phi1: 0.0,
            phi2: 0.0,
            inv_metric: &geom::IDENTITY,
        };
        assert!((triangle_update(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_side_reduces_to_edge() {
        let m = inverse_metric(1.0, 0.3, &[0.6, 0.8, 0.0]);
        let p = LocalUpdateProblem {
            x: [0.1, 0.9, 0.0],
            y1: [0.0, 0.0, 0.0],
            y2: [1.0, 0.2, 0.0],
            phi1: 0.7,
            phi2: f64::INFINITY,
            inv_metric: &m,
        };
        assert_eq!(triangle_update(&p), edge_update(&p.x, &p.y1, 0.7, &m));
        let q = LocalUpdateProblem { phi1: f64::INFINITY, phi2: 0.3, ..p };
        assert_eq!(triangle_update(&q), edge_update(&p.x, &p.y2, 0.3, &m));
    }

    #[test]
    fn chained_collinear_edges_equal_direct_distance() {
        let m = inverse_metric(0.7, 0.2, &[0.6, 0.8, 0.0]);
        let a = [0.0, 0.0, 0.0];
        let mid = [0.15, 0.1, 0.0];
        let b = [0.3, 0.2, 0.0];
        let chained = edge_update(&b, &mid, edge_update(&mid, &a, 0.0, &m), &m);
        let direct = edge_update(&b, &a, 0.0, &m);
        assert!((chained - direct).abs() <= 1e-12);
    }

    fn grid_min(p: &LocalUpdateProblem<'_>, samples: usize) -> f64 {
        let a = geom::sub(&p.x, &p.y1);
        let b = geom::sub(&p.y2, &p.y1);
        (0..=samples)
            .map(|k| objective(p, &a, &b, k as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min)
    }

    fn spd(l1: f64, l2: f64, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        // R diag(l1, l2) Rᵀ
        [
            [l1 * c * c + l2 * s * s, (l1 - l2) * c * s, 0.0],
            [(l1 - l2) * c * s, l1 * s * s + l2 * c * c, 0.0],
            [0.0, 0.0, 1.0],
        ]
    }

    prop_compose! {
        fn instance()(
            x in prop::array::uniform2(-1.0f64..1.0),
            y1 in prop::array::uniform2(-1.0f64..1.0),
            y2 in prop::array::uniform2(-1.0f64..1.0),
            phi1 in 0.0f64..2.0,
            phi2 in 0.0f64..2.0,
            l1 in 0.2f64..5.0,
            l2 in 0.2f64..5.0,
            angle in 0.0f64..std::f64::consts::PI,
        ) -> (Vec3, Vec3, Vec3, f64, f64, Mat3) {
            ([x[0], x[1], 0.0], [y1[0], y1[1], 0.0], [y2[0], y2[1], 0.0], phi1, phi2, spd(l1, l2, angle))
        }
    }

    fn well_formed(x: &Vec3, y1: &Vec3, y2: &Vec3) -> bool {
        geom::double_area(x, y1, y2) > 1e-3
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn matches_grid_search((x, y1, y2, phi1, phi2, m) in instance()) {
            prop_assume!(well_formed(&x, &y1, &y2));
            let p = LocalUpdateProblem { x, y1, y2, phi1, phi2, inv_metric: &m };
            let got = triangle_update(&p);
            let oracle = grid_min(&p, 100_000);
            prop_assert!(got <= oracle + 1e-12);
            prop_assert!(oracle - got <= 1e-6, "got {} oracle {}", got, oracle);
        }

        #[test]
        fn bounded_by_edges_and_causal((x, y1, y2, phi1, phi2, m) in instance()) {
            prop_assume!(well_formed(&x, &y1, &y2));
            let p = LocalUpdateProblem { x, y1, y2, phi1, phi2, inv_metric: &m };
            let got = triangle_update(&p);
            prop_assert!(got <= edge_update(&x, &y1, phi1, &m));
            prop_assert!(got <= edge_update(&x, &y2, phi2, &m));
            prop_assert!(got >= phi1.min(phi2));
        }

        #[test]
        fn monotone_in_known_values((x, y1, y2, phi1, phi2, m) in instance(), bump in 0.0f64..1.0, which in any::<bool>()) {
            prop_assume!(well_formed(&x, &y1, &y2));
            let p = LocalUpdateProblem { x, y1, y2, phi1, phi2, inv_metric: &m };
            let q = if which {
                LocalUpdateProblem { phi1: phi1 + bump, ..p }
            } else {
                LocalUpdateProblem { phi2: phi2 + bump, ..p }
            };
            prop_assert!(triangle_update(&q) >= triangle_update(&p) - 1e-12);
        }

        #[test]
        fn scaling_covariance((x, y1, y2, phi1, phi2, m) in instance(), lambda in 0.1f64..10.0) {
            prop_assume!(well_formed(&x, &y1, &y2));
            let p = LocalUpdateProblem { x, y1, y2, phi1, phi2, inv_metric: &m };
            let ms = m.map(|row| row.map(|v| v / (lambda * lambda)));
            let q = LocalUpdateProblem {
                x: geom::scale(&x, lambda),
                y1: geom::scale(&y1, lambda),
                y2: geom::scale(&y2, lambda),
                phi1,
                phi2,
                inv_metric: &ms,
            };
            let (a, b) = (triangle_update(&p), triangle_update(&q));
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_lead_uses_golden_section() {
        // φ2 − φ1 equals the metric length of the edge: the lead coefficient vanishes
        let p = LocalUpdateProblem {
            x: [0.3, 0.7, 0.0],
            y1: [0.0, 0.0, 0.0],
            y2: [1.0, 0.0, 0.0],
            phi1: 0.0,
            phi2: 1.0,
            inv_metric: &geom::IDENTITY,
        };
        let got = triangle_update(&p);
        let oracle = grid_min(&p, 1_000_000);
        assert!((got - oracle).abs() < 1e-6);
    }

    fn fan() -> Mesh {
        // hexagonal one-ring around node 0
        let mut nodes = vec![[0.0, 0.0, 0.0]];
        for k in 0..6 {
            let a = std::f64::consts::TAU * k as f64 / 6.0;
            nodes.push([a.cos(), a.sin(), 0.0]);
        }
        let triangles = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        Mesh::new(2, nodes, triangles, vec![[1.0, 0.0, 0.0]; 6], vec![0; 7]).unwrap()
    }

    #[test]
    fn one_ring_all_unknown_is_infinite() {
        let m = fan();
        let adj = build_adjacency(&m);
        let v = node_update(0, &m, &adj, |_| f64::INFINITY, |_| Some(geom::IDENTITY));
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn one_ring_single_known_neighbor() {
        let m = fan();
        let adj = build_adjacency(&m);
        let values = |y: usize| if y == 3 { 0.0 } else { f64::INFINITY };
        let ring = node_update(0, &m, &adj, values, |_| Some(geom::IDENTITY));
        let per_tri: f64 = adj
            .shared_triangles(0, 3)
            .iter()
            .map(|&t| {
                let (y1, y2) = opposite(m.triangle(t), 0);
                triangle_update(&LocalUpdateProblem {
                    x: *m.node(0),
                    y1: *m.node(y1),
                    y2: *m.node(y2),
                    phi1: values(y1),
                    phi2: values(y2),
                    inv_metric: &geom::IDENTITY,
                })
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(adj.shared_triangles(0, 3).len(), 2);
        assert_eq!(ring, per_tri);
        assert!((ring - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_conductive_ring_is_infinite() {
        let m = fan();
        let adj = build_adjacency(&m);
        let v = node_update(0, &m, &adj, |_| 0.0, |_| None);
        assert_eq!(v, f64::INFINITY);
    }
}
