//! Node and edge connectivity: `N(x)`, `T(x)` and `T(x, x')`.

use log::warn;

use crate::mesh::Mesh;

/// Compressed connectivity tables.
///
/// Neighbor lists and incident-triangle lists are sorted ascending, so the
/// structure is a deterministic function of the mesh.
#[derive(Debug, Clone)]
pub struct Adjacency {
    nbr_offsets: Vec<usize>,
    nbr: Vec<usize>,
    nbr_edge: Vec<usize>,
    tri_offsets: Vec<usize>,
    tris: Vec<usize>,
    edges: Vec<[usize; 2]>,
    edge_tri_offsets: Vec<usize>,
    edge_tris: Vec<usize>,
    non_manifold: Vec<usize>,
}

pub fn build_adjacency(mesh: &Mesh) -> Adjacency {
    let n = mesh.node_count();

    // (lo, hi, triangle) for every triangle side
    let mut sides: Vec<(usize, usize, usize)> = Vec::with_capacity(3 * mesh.triangle_count());
    for (t, &[a, b, c]) in mesh.triangles().iter().enumerate() {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            sides.push((p.min(q), p.max(q), t));
        }
    }
    sides.sort_unstable();

    let mut edges = Vec::new();
    let mut edge_tri_offsets = vec![0];
    let mut edge_tris = Vec::with_capacity(sides.len());
    let mut non_manifold = Vec::new();
    let mut i = 0;
    while i < sides.len() {
        let (lo, hi, _) = sides[i];
        let mut j = i;
        while j < sides.len() && sides[j].0 == lo && sides[j].1 == hi {
            edge_tris.push(sides[j].2);
            j += 1;
        }
        if j - i > 2 {
            non_manifold.push(edges.len());
        }
        edges.push([lo, hi]);
        edge_tri_offsets.push(edge_tris.len());
        i = j;
    }
    if !non_manifold.is_empty() {
        warn!(
            "{} non-manifold edge(s); all incident triangles take part in updates",
            non_manifold.len()
        );
    }

    let mut per_node: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &[a, b]) in edges.iter().enumerate() {
        per_node[a].push((b, e));
        per_node[b].push((a, e));
    }
    let mut nbr_offsets = Vec::with_capacity(n + 1);
    let mut nbr = Vec::with_capacity(2 * edges.len());
    let mut nbr_edge = Vec::with_capacity(2 * edges.len());
    nbr_offsets.push(0);
    for list in &mut per_node {
        list.sort_unstable();
        for &(m, e) in list.iter() {
            nbr.push(m);
            nbr_edge.push(e);
        }
        nbr_offsets.push(nbr.len());
    }

    let mut node_tris: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &v in tri {
            node_tris[v].push(t);
        }
    }
    let mut tri_offsets = Vec::with_capacity(n + 1);
    let mut tris = Vec::with_capacity(3 * mesh.triangle_count());
    tri_offsets.push(0);
    for list in &node_tris {
        tris.extend_from_slice(list);
        tri_offsets.push(tris.len());
    }

    Adjacency {
        nbr_offsets,
        nbr,
        nbr_edge,
        tri_offsets,
        tris,
        edges,
        edge_tri_offsets,
        edge_tris,
        non_manifold,
    }
}

impl Adjacency {
    pub fn node_count(&self) -> usize {
        self.nbr_offsets.len() - 1
    }

    /// `N(x)`, ascending.
    #[inline]
    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.nbr[self.nbr_offsets[x]..self.nbr_offsets[x + 1]]
    }

    /// `T(x)`, ascending.
    #[inline]
    pub fn triangles_of(&self, x: usize) -> &[usize] {
        &self.tris[self.tri_offsets[x]..self.tri_offsets[x + 1]]
    }

    pub fn edge_id(&self, x: usize, y: usize) -> Option<usize> {
        let lo = self.nbr_offsets[x];
        self.neighbors(x)
            .binary_search(&y)
            .ok()
            .map(|k| self.nbr_edge[lo + k])
    }

    /// `T(x, y)`: triangles sharing the edge, empty if `(x, y)` is not an edge.
    #[inline]
    pub fn shared_triangles(&self, x: usize, y: usize) -> &[usize] {
        match self.edge_id(x, y) {
            Some(e) => self.edge_triangles(e),
            None => &[],
        }
    }

    #[inline]
    pub fn edge_triangles(&self, e: usize) -> &[usize] {
        &self.edge_tris[self.edge_tri_offsets[e]..self.edge_tri_offsets[e + 1]]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids with more than two incident triangles.
    pub fn non_manifold_edges(&self) -> &[usize] {
        &self.non_manifold
    }

    /// Edges with exactly one incident triangle.
    pub fn boundary_edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        (0..self.edges.len())
            .filter(|&e| self.edge_triangles(e).len() == 1)
            .map(|e| self.edges[e])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::generate_structured_square;

    fn two_triangles() -> Mesh {
        Mesh::new(
            2,
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [1, 3, 2]],
            vec![[1.0, 0.0, 0.0]; 2],
            vec![0; 4],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle() {
        let m = Mesh::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
            vec![[1.0, 0.0, 0.0]],
            vec![0; 3],
        )
        .unwrap();
        let adj = build_adjacency(&m);
        assert_eq!(adj.neighbors(0), &[1, 2]);
        assert_eq!(adj.shared_triangles(0, 1), &[0]);
        assert_eq!(adj.triangles_of(2), &[0]);
    }

    #[test]
    fn shared_edge_has_two_triangles() {
        let adj = build_adjacency(&two_triangles());
        assert_eq!(adj.shared_triangles(1, 2), &[0, 1]);
        assert_eq!(adj.shared_triangles(2, 1), &[0, 1]);
        assert!(adj.shared_triangles(0, 3).is_empty());
        assert_eq!(adj.boundary_edges().count(), 4);
    }

    #[test]
    fn non_manifold_edge_is_recorded() {
        let m = Mesh::new(
            3,
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.5, 1.0, 0.0],
                [0.5, -1.0, 0.0],
                [0.5, 0.0, 1.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
            vec![[1.0, 0.0, 0.0]; 3],
            vec![0; 5],
        )
        .unwrap();
        let adj = build_adjacency(&m);
        assert_eq!(adj.non_manifold_edges().len(), 1);
        assert_eq!(adj.shared_triangles(0, 1).len(), 3);
    }

    #[test]
    fn interior_grid_node_has_six_neighbors() {
        let m = generate_structured_square(1.0, 0.25, None, None).unwrap();
        let adj = build_adjacency(&m);
        // node (2, 2) of the 5x5 lattice
        assert_eq!(adj.neighbors(2 * 5 + 2).len(), 6);
    }

    #[test]
    fn symmetric_and_consistent() {
        let m = generate_structured_square(1.0, 0.2, None, None).unwrap();
        let adj = build_adjacency(&m);
        for x in 0..m.node_count() {
            for &y in adj.neighbors(x) {
                assert!(adj.neighbors(y).contains(&x));
                assert_eq!(adj.shared_triangles(x, y), adj.shared_triangles(y, x));
                assert!(!adj.shared_triangles(x, y).is_empty());
            }
            for &t in adj.triangles_of(x) {
                assert!(m.triangle(t).contains(&x));
            }
        }
    }

    #[test]
    fn deterministic() {
        let m = generate_structured_square(1.0, 0.1, None, None).unwrap();
        let text = m.to_json_string();
        let a = build_adjacency(&Mesh::from_json_str(&text).unwrap());
        let b = build_adjacency(&Mesh::from_json_str(&text).unwrap());
        assert_eq!(a.nbr, b.nbr);
        assert_eq!(a.tris, b.tris);
        assert_eq!(a.edge_tris, b.edge_tris);
    }
}
