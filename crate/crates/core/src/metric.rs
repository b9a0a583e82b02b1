//! Anisotropy tensors built from fiber direction and conduction velocities,
//! and the metric acuteness audit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::mesh::Mesh;

/// `D = cv_t² I + (cv_l² − cv_t²) f fᵀ` together with its inverse.
///
/// Velocities are in cm/ms, so `D` is in cm²/ms² and `D⁻¹` in ms²/cm².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    pub d: Mat3,
    pub inv: Mat3,
}

/// Builds the anisotropy tensor for one element.
pub fn metric_tensor(cv_l: f64, cv_t: f64, fiber: &Vec3) -> Result<MetricTensor> {
    if !(cv_t > 0.0) || !(cv_l >= cv_t) || !cv_l.is_finite() {
        return Err(Error::Domain(format!(
            "conduction velocities must satisfy cv_l >= cv_t > 0, got cv_l = {cv_l}, cv_t = {cv_t}"
        )));
    }
    let len = geom::norm(fiber);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("fiber must be a unit vector, |f| = {len}")));
    }
    Ok(metric_tensor_unchecked(cv_l, cv_t, fiber))
}

/// Same as [`metric_tensor`] without argument checks; used in inner loops
/// where the inputs were validated upstream.
#[inline]
pub fn metric_tensor_unchecked(cv_l: f64, cv_t: f64, fiber: &Vec3) -> MetricTensor {
    MetricTensor {
        d: rank_one_update(cv_t * cv_t, cv_l * cv_l - cv_t * cv_t, fiber),
        inv: inverse_metric(cv_l, cv_t, fiber),
    }
}

/// `D⁻¹ = I / cv_t² + (1/cv_l² − 1/cv_t²) f fᵀ`, the matrix every local
/// update consumes.
#[inline]
pub fn inverse_metric(cv_l: f64, cv_t: f64, fiber: &Vec3) -> Mat3 {
    let a = 1.0 / (cv_t * cv_t);
    let b = 1.0 / (cv_l * cv_l) - a;
    rank_one_update(a, b, fiber)
}

#[inline]
fn rank_one_update(a: f64, b: f64, f: &Vec3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = b * f[i] * f[j];
        }
        m[i][i] += a;
    }
    m
}

/// Per-triangle metric. `None` marks a non-conductive element.
#[derive(Debug, Clone)]
pub struct MetricField {
    tensors: Vec<Option<MetricTensor>>,
    cv: Vec<(f64, f64)>,
}

impl MetricField {
    /// Same velocities on every triangle, fibers taken from the mesh.
    pub fn uniform(mesh: &Mesh, cv_l: f64, cv_t: f64) -> Result<Self> {
        Self::from_fn(mesh, |_| Some((cv_l, cv_t)))
    }

    /// `velocities(t)` returns `(cv_l, cv_t)` for triangle `t`, or `None`
    /// if it does not conduct.
    pub fn from_fn(mesh: &Mesh, velocities: impl Fn(usize) -> Option<(f64, f64)>) -> Result<Self> {
        let mut tensors = Vec::with_capacity(mesh.triangle_count());
        let mut cv = Vec::with_capacity(mesh.triangle_count());
        for t in 0..mesh.triangle_count() {
            match velocities(t) {
                Some((l, tr)) => {
                    tensors.push(Some(metric_tensor(l, tr, mesh.fiber(t)).map_err(|e| {
                        Error::Domain(format!("triangle {t}: {e}"))
                    })?));
                    cv.push((l, tr));
                }
                None => {
                    tensors.push(None);
                    cv.push((0.0, 0.0));
                }
            }
        }
        Ok(MetricField { tensors, cv })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    #[inline]
    pub fn tensor(&self, t: usize) -> Option<&MetricTensor> {
        self.tensors[t].as_ref()
    }

    #[inline]
    pub fn inverse(&self, t: usize) -> Option<&Mat3> {
        self.tensors[t].as_ref().map(|m| &m.inv)
    }

    /// `(cv_l, cv_t)` of triangle `t`, zeros when non-conductive.
    pub fn velocities(&self, t: usize) -> (f64, f64) {
        self.cv[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// `true` when the triangle satisfies the strict acuteness condition.
    pub passed: Vec<bool>,
    /// Smallest `e_iᵀ D⁻¹ e_j` over the three vertices (ms²).
    pub min_inner: Vec<f64>,
    pub failures: usize,
    pub failure_fraction: f64,
}

impl AuditReport {
    /// Failing triangles ordered from the most negative inner product.
    pub fn worst(&self, count: usize) -> Vec<(usize, f64)> {
        let mut bad: Vec<(usize, f64)> = self
            .passed
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(t, _)| (t, self.min_inner[t]))
            .collect();
        bad.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        bad.truncate(count);
        bad
    }
}

/// Smallest vertex inner product `(p_j − p_i)ᵀ M (p_k − p_i)` of a triangle.
pub fn min_vertex_inner_product(points: &[Vec3; 3], inv: &Mat3) -> f64 {
    (0..3)
        .map(|i| {
            let p = &points[i];
            let e1 = geom::sub(&points[(i + 1) % 3], p);
            let e2 = geom::sub(&points[(i + 2) % 3], p);
            geom::bilinear(&e1, inv, &e2)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Checks `e_iᵀ D⁻¹ e_j > 0` at every vertex of every triangle.
///
/// Non-conductive triangles pass vacuously.
pub fn acuteness_audit(mesh: &Mesh, metric: &MetricField) -> AuditReport {
    let min_inner: Vec<f64> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| match metric.inverse(t) {
            Some(inv) => min_vertex_inner_product(&mesh.triangle_points(t), inv),
            None => f64::INFINITY,
        })
        .collect();
    let passed: Vec<bool> = min_inner.iter().map(|&m| m > 0.0).collect();
    let failures = passed.iter().filter(|&&p| !p).count();
    AuditReport {
        failure_fraction: failures as f64 / passed.len() as f64,
        passed,
        min_inner,
        failures,
    }
}
