//! Triangle meshes: storage, validation and the native JSON format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Tissue ids are plain integers; the meaning of each id comes from the
/// scenario that uses the mesh.
pub type TissueId = u32;

const FIBER_NORM_TOL: f64 = 1e-9;

/// A validated triangle mesh in 2D or 3D.
///
/// Coordinates are in cm. Fibers live on triangles, tissue labels on nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    fibers: Vec<Vec3>,
    tissue: Vec<TissueId>,
}

/// On-disk layout of the native mesh file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    nodes: Vec<Vec<f64>>,
    triangles: Vec<[usize; 3]>,
    fibers: Vec<Vec<f64>>,
    tissue: Vec<TissueId>,
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        dim: usize,
        nodes: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        fibers: Vec<Vec3>,
        tissue: Vec<TissueId>,
    ) -> Result<Self> {
        let mesh = Mesh {
            dim,
            nodes,
            triangles,
            fibers,
            tissue,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Validation(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.nodes.is_empty() || self.triangles.is_empty() {
            return Err(Error::Validation("mesh has no nodes or no triangles".into()));
        }
        if self.fibers.len() != self.triangles.len() {
            return Err(Error::Validation(format!(
                "{} fibers for {} triangles",
                self.fibers.len(),
                self.triangles.len()
            )));
        }
        if self.tissue.len() != self.nodes.len() {
            return Err(Error::Validation(format!(
                "{} tissue labels for {} nodes",
                self.tissue.len(),
                self.nodes.len()
            )));
        }
        for (i, p) in self.nodes.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("node {i} has a non-finite coordinate")));
            }
            if self.dim == 2 && p[2] != 0.0 {
                return Err(Error::Validation(format!("node {i} has z != 0 in a 2D mesh")));
            }
        }
        let n = self.nodes.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references node {bad} but the mesh has {n} nodes"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!(
                    "triangle {t} repeats a vertex: {tri:?}"
                )));
            }
            let [a, b, c] = self.triangle_points(t);
            let longest = geom::norm(&geom::sub(&b, &a))
                .max(geom::norm(&geom::sub(&c, &b)))
                .max(geom::norm(&geom::sub(&a, &c)));
            if geom::double_area(&a, &b, &c) <= 1e-12 * longest * longest {
                return Err(Error::Validation(format!("triangle {t} is degenerate")));
            }
        }
        for (t, f) in self.fibers.iter().enumerate() {
            let len = geom::norm(f);
            if !len.is_finite() || (len - 1.0).abs() > FIBER_NORM_TOL {
                return Err(Error::Validation(format!(
                    "fiber of triangle {t} has norm {len}, expected 1"
                )));
            }
            if self.dim == 2 && f[2] != 0.0 {
                return Err(Error::Validation(format!(
                    "fiber of triangle {t} has z != 0 in a 2D mesh"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Vec3 {
        &self.nodes[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn fibers(&self) -> &[Vec3] {
        &self.fibers
    }

    pub fn fiber(&self, t: usize) -> &Vec3 {
        &self.fibers[t]
    }

    pub fn tissue(&self) -> &[TissueId] {
        &self.tissue
    }

    pub fn tissue_of(&self, i: usize) -> TissueId {
        self.tissue[i]
    }

    /// Replaces every fiber, e.g. with a uniform direction chosen by a scenario.
    pub fn set_fibers(&mut self, fibers: Vec<Vec3>) -> Result<()> {
        let old = std::mem::replace(&mut self.fibers, fibers);
        if let Err(e) = self.validate() {
            self.fibers = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn set_tissue(&mut self, tissue: Vec<TissueId>) -> Result<()> {
        let old = std::mem::replace(&mut self.tissue, tissue);
        if let Err(e) = self.validate() {
            self.tissue = old;
            return Err(e);
        }
        Ok(())
    }

    /// Distinct tissue ids present on the nodes, ascending.
    pub fn tissue_ids(&self) -> Vec<TissueId> {
        let mut ids = self.tissue.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Euler characteristic `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        self.nodes.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::parse("mesh", e))?;
        let dim = match file.nodes.first().map(Vec::len) {
            Some(d @ (2 | 3)) => d,
            Some(d) => {
                return Err(Error::Validation(format!(
                    "node 0 has {d} coordinates, expected 2 or 3"
                )))
            }
            None => return Err(Error::Validation("mesh has no nodes".into())),
        };
        let lift = |what: &str, i: usize, v: &[f64]| -> Result<Vec3> {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "{what} {i} has {} components, expected {dim}",
                    v.len()
                )));
            }
            Ok([v[0], v[1], if dim == 3 { v[2] } else { 0.0 }])
        };
        let nodes = file
            .nodes
            .iter()
            .enumerate()
            .map(|(i, v)| lift("node", i, v))
            .collect::<Result<Vec<_>>>()?;
        let fibers = file
            .fibers
            .iter()
            .enumerate()
            .map(|(i, v)| lift("fiber of triangle", i, v))
            .collect::<Result<Vec<_>>>()?;
        Mesh::new(dim, nodes, file.triangles, fibers, file.tissue)
    }

    pub fn to_json_string(&self) -> String {
        let cut = |v: &Vec3| v[..self.dim].to_vec();
        let file = MeshFile {
            nodes: self.nodes.iter().map(cut).collect(),
            triangles: self.triangles.clone(),
            fibers: self.fibers.iter().map(cut).collect(),
            tissue: self.tissue.clone(),
        };
        serde_json::to_string(&file).expect("mesh serialization cannot fail")
    }
}

/// Reads and validates a native mesh file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Mesh::from_json_str(&text)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, mesh.to_json_string()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EQUILATERAL: &str = r#"{
        "nodes": [[0, 0], [1, 0], [0.5, 0.8660254037844386]],
        "triangles": [[0, 1, 2]],
        "fibers": [[1, 0]],
        "tissue": [0, 0, 0]
    }"#;

    #[test]
    fn smallest_valid_mesh() {
        let m = Mesh::from_json_str(EQUILATERAL).unwrap();
        assert_eq!(m.node_count(), 3);
        assert_eq!(m.triangle_count(), 1);
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn dangling_index_names_triangle() {
        let text = EQUILATERAL.replace("[[0, 1, 2]]", "[[0, 1, 99]]");
        let err = Mesh::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("triangle 0"), "{err}");
        assert!(err.contains("99"), "{err}");
    }

    #[test]
    fn non_unit_fiber_rejected() {
        let text = EQUILATERAL.replace("\"fibers\": [[1, 0]]", "\"fibers\": [[1, 0.1]]");
        let err = Mesh::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("fiber of triangle 0"), "{err}");
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let text = r#"{"nodes": [[0,0],[1,0],[2,0]], "triangles": [[0,1,2]],
                       "fibers": [[1,0]], "tissue": [0,0,0]}"#;
        let err = Mesh::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("triangle 0 is degenerate"), "{err}");
    }

    #[test]
    fn nan_literal_is_a_parse_error() {
        let text = EQUILATERAL.replace("[0, 0]", "[NaN, 0]");
        assert!(matches!(
            Mesh::from_json_str(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn json_round_trip_3d() {
        let m = Mesh::new(
            3,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 1.0, 0.25]],
            vec![[0, 1, 2]],
            vec![[0.0, 0.0, 1.0]],
            vec![1, 2, 3],
        )
        .unwrap();
        let back = Mesh::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, back);
    }
}
