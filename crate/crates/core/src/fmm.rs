//! Single-pass fast marching and the edge-only Dijkstra baseline.

use crate::adjacency::{build_adjacency, Adjacency};
use crate::error::{Error, Result};
use crate::heap::WavefrontHeap;
use crate::local::{pair_edge_update, pair_update};
use crate::mesh::Mesh;
use crate::metric::MetricField;

/// A stored temporary time only moves when it improves by more than this (ms).
pub const IMPROVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MarchState {
    Far,
    Considered,
    Accepted,
}

/// Result of a solve: `phi` is finite exactly on accepted nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationField {
    pub phi: Vec<f64>,
    pub state: Vec<MarchState>,
    /// Node ids in acceptance order.
    pub order: Vec<usize>,
    /// Accepted nodes that were not sources.
    pub iterations: usize,
}

impl ActivationField {
    pub fn max_finite(&self) -> f64 {
        self.phi
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Candidates {
    Triangles,
    Edges,
}

pub fn fmm_solve(mesh: &Mesh, metric: &MetricField, sources: &[(usize, f64)]) -> Result<ActivationField> {
    fmm_solve_with(mesh, &build_adjacency(mesh), metric, sources)
}

pub fn fmm_solve_with(
    mesh: &Mesh,
    adjacency: &Adjacency,
    metric: &MetricField,
    sources: &[(usize, f64)],
) -> Result<ActivationField> {
    march(mesh, adjacency, metric, sources, Candidates::Triangles)
}

pub fn dijkstra_solve(mesh: &Mesh, metric: &MetricField, sources: &[(usize, f64)]) -> Result<ActivationField> {
    dijkstra_solve_with(mesh, &build_adjacency(mesh), metric, sources)
}

pub fn dijkstra_solve_with(
    mesh: &Mesh,
    adjacency: &Adjacency,
    metric: &MetricField,
    sources: &[(usize, f64)],
) -> Result<ActivationField> {
    march(mesh, adjacency, metric, sources, Candidates::Edges)
}

fn march(
    mesh: &Mesh,
    adj: &Adjacency,
    metric: &MetricField,
    sources: &[(usize, f64)],
    mode: Candidates,
) -> Result<ActivationField> {
    let n = mesh.node_count();
    if metric.len() != mesh.triangle_count() {
        return Err(Error::LengthMismatch {
            left: metric.len(),
            right: mesh.triangle_count(),
        });
    }
    if sources.is_empty() {
        return Err(Error::Domain("at least one source node is required".into()));
    }
    let mut heap = WavefrontHeap::new(n);
    let mut is_source = vec![false; n];
    for &(x, phi0) in sources {
        if x >= n {
            return Err(Error::Domain(format!("source node {x} is out of range ({n} nodes)")));
        }
        if !phi0.is_finite() {
            return Err(Error::Domain(format!("source node {x} has non-finite time {phi0}")));
        }
        is_source[x] = true;
        if heap.key(x).is_none_or(|k| phi0 < k) {
            heap.set(x, phi0);
        }
    }

    let mut phi = vec![f64::INFINITY; n];
    let mut state = vec![MarchState::Far; n];
    for (x, s) in state.iter_mut().enumerate() {
        if heap.contains(x) {
            *s = MarchState::Considered;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut iterations = 0;

    while let Some((value, a)) = heap.pop() {
        state[a] = MarchState::Accepted;
        phi[a] = value;
        order.push(a);
        if !is_source[a] {
            iterations += 1;
        }
        for &x in adj.neighbors(a) {
            if state[x] == MarchState::Accepted {
                continue;
            }
            let resolver = |t: usize| metric.inverse(t).copied();
            let cand = match mode {
                Candidates::Triangles => pair_update(x, a, mesh, adj, |y| phi[y], resolver),
                Candidates::Edges => pair_edge_update(x, a, value, mesh, adj, resolver),
            }
            .max(value);
            let old = heap.key(x).unwrap_or(f64::INFINITY);
            if cand < old - IMPROVE_TOL {
                heap.set(x, cand);
                state[x] = MarchState::Considered;
            }
        }
    }

    Ok(ActivationField {
        phi,
        state,
        order,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::generate_structured_square;
    use crate::local::node_update;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corner(mesh: &Mesh) -> usize {
        (0..mesh.node_count())
            .min_by(|&a, &b| {
                let (pa, pb) = (mesh.node(a), mesh.node(b));
                (pa[0] + pa[1]).total_cmp(&(pb[0] + pb[1]))
            })
            .unwrap()
    }

    #[test]
    fn empty_sources_rejected() {
        let m = generate_structured_square(1.0, 0.5, None, None).unwrap();
        let metric = MetricField::uniform(&m, 1.0, 1.0).unwrap();
        assert!(matches!(fmm_solve(&m, &metric, &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn all_sources_means_no_marching() {
        let m = generate_structured_square(1.0, 0.25, None, None).unwrap();
        let metric = MetricField::uniform(&m, 1.0, 1.0).unwrap();
        let src: Vec<_> = (0..m.node_count()).map(|x| (x, 0.0)).collect();
        let f = fmm_solve(&m, &metric, &src).unwrap();
        assert_eq!(f.iterations, 0);
        assert!(f.phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlapping_sources_keep_minimum() {
        let m = generate_structured_square(1.0, 0.5, None, None).unwrap();
        let metric = MetricField::uniform(&m, 1.0, 1.0).unwrap();
        let f = fmm_solve(&m, &metric, &[(4, 3.0), (4, 1.0), (4, 2.0)]).unwrap();
        assert_eq!(f.phi[4], 1.0);
    }

    #[test]
    fn chain_dijkstra_is_exact() {
        // a thin strip of triangles along the x axis; the bottom row is a straight chain
        let k = 20;
        let mut nodes = Vec::new();
        for i in 0..=k {
            nodes.push([i as f64 * 0.1, 0.0, 0.0]);
        }
        for i in 0..=k {
            nodes.push([i as f64 * 0.1 + 0.05, 0.1, 0.0]);
        }
        let mut tris = Vec::new();
        for i in 0..k {
            tris.push([i, i + 1, k + 1 + i]);
            tris.push([i + 1, k + 2 + i, k + 1 + i]);
        }
        let nt = tris.len();
        let m = Mesh::new(2, nodes, tris, vec![[1.0, 0.0, 0.0]; nt], vec![0; 2 * k + 2]).unwrap();
        let c = 0.5;
        let metric = MetricField::uniform(&m, c, c).unwrap();
        let f = dijkstra_solve(&m, &metric, &[(0, 0.0)]).unwrap();
        for i in 0..=k {
            let want = m.node(i)[0] / c;
            assert!((f.phi[i] - want).abs() <= 1e-12, "node {i}: {} vs {want}", f.phi[i]);
        }
    }

    #[test]
    fn dijkstra_overestimates_on_grid() {
        let m = generate_structured_square(1.0, 0.05, None, None).unwrap();
        let metric = MetricField::uniform(&m, 1.0, 1.0).unwrap();
        // source at (1, 0) so the grid diagonals do not line up with the target
        let src = (0..m.node_count())
            .find(|&x| m.node(x)[0] == 1.0 && m.node(x)[1] == 0.0)
            .unwrap();
        let target = (0..m.node_count())
            .find(|&x| m.node(x)[0] == 0.0 && m.node(x)[1] == 1.0)
            .unwrap();
        let d = dijkstra_solve(&m, &metric, &[(src, 0.0)]).unwrap();
        assert!(d.phi[target] > 2f64.sqrt() * 1.05);
        let f = fmm_solve(&m, &metric, &[(src, 0.0)]).unwrap();
        assert!((f.phi[target] - 2f64.sqrt()).abs() < (d.phi[target] - 2f64.sqrt()).abs());
    }

    #[test]
    fn monotone_and_single_pass_consistent() {
        let m = generate_structured_square(2.0, 0.1, None, None).unwrap();
        let adj = build_adjacency(&m);
        let metric = MetricField::uniform(&m, 0.6, 0.6).unwrap();
        let f = fmm_solve_with(&m, &adj, &metric, &[(corner(&m), 0.0)]).unwrap();
        assert_eq!(f.order.len(), m.node_count());
        for w in f.order.windows(2) {
            assert!(f.phi[w[0]] <= f.phi[w[1]]);
        }
        // the right-triangle grid is only weakly acute, so allow round-off
        for x in 0..m.node_count() {
            let again = node_update(x, &m, &adj, |y| f.phi[y], |t| metric.inverse(t).copied());
            assert!(again >= f.phi[x] - 1e-9, "node {x}: {again} < {}", f.phi[x]);
        }
    }

    #[test]
    fn deterministic() {
        let m = generate_structured_square(1.0, 0.05, None, None).unwrap();
        let metric = MetricField::uniform(&m, 0.5, 0.2).unwrap();
        let a = fmm_solve(&m, &metric, &[(7, 0.0), (300, 2.0)]).unwrap();
        let b = fmm_solve(&m, &metric, &[(7, 0.0), (300, 2.0)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_conductive_region_stays_far() {
        let m = generate_structured_square(1.0, 0.25, None, None).unwrap();
        // only triangles fully in the left half conduct
        let metric = MetricField::from_fn(&m, |t| {
            let left = m.triangle_points(t).iter().all(|p| p[0] <= 0.5);
            left.then_some((1.0, 1.0))
        })
        .unwrap();
        let f = fmm_solve(&m, &metric, &[(0, 0.0)]).unwrap();
        for x in 0..m.node_count() {
            assert_eq!(f.phi[x].is_finite(), m.node(x)[0] <= 0.5, "node {x}");
        }
    }

    /// Straightforward re-implementation with a linear-scan priority structure.
    fn naive_order(mesh: &Mesh, metric: &MetricField, source: usize) -> Vec<usize> {
        let adj = build_adjacency(mesh);
        let n = mesh.node_count();
        let mut tmp = vec![f64::INFINITY; n];
        let mut phi = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        tmp[source] = 0.0;
        let mut order = Vec::new();
        loop {
            let next = (0..n)
                .filter(|&x| !done[x] && tmp[x].is_finite())
                .min_by(|&a, &b| tmp[a].total_cmp(&tmp[b]).then(a.cmp(&b)));
            let Some(a) = next else { break };
            done[a] = true;
            phi[a] = tmp[a];
            order.push(a);
            for &x in adj.neighbors(a) {
                if done[x] {
                    continue;
                }
                let c = pair_update(x, a, mesh, &adj, |y| phi[y], |t| metric.inverse(t).copied())
                    .max(phi[a]);
                if c < tmp[x] - IMPROVE_TOL {
                    tmp[x] = c;
                }
            }
        }
        order
    }

    fn jittered(seed: u64) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = generate_structured_square(1.0, 0.125, None, None).unwrap();
        let nodes = base
            .nodes()
            .iter()
            .map(|p| {
                let interior = p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
                if interior {
                    [p[0] + rng.gen_range(-0.03..0.03), p[1] + rng.gen_range(-0.03..0.03), 0.0]
                } else {
                    *p
                }
            })
            .collect();
        Mesh::new(
            2,
            nodes,
            base.triangles().to_vec(),
            base.fibers().to_vec(),
            base.tissue().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn heap_matches_linear_scan_on_random_meshes() {
        for seed in 0..100 {
            let m = jittered(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let cl = rng.gen_range(0.3..1.0);
            let ct = cl * rng.gen_range(0.2..1.0);
            let metric = MetricField::uniform(&m, cl, ct).unwrap();
            let src = rng.gen_range(0..m.node_count());
            let f = fmm_solve(&m, &metric, &[(src, 0.0)]).unwrap();
            assert_eq!(f.order, naive_order(&m, &metric, src), "seed {seed}");
        }
    }
}
