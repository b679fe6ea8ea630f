//! Node-wise metric tensor field and metric-space measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::recover_hessian;
use crate::mesh::{Mesh, Renumbering, VertexId, INVALID};
use crate::parallel::Workers;

/// Symmetric 2x2 tensor `[[m00, m01], [m01, m11]]`, units of 1/length².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTensor {
    pub m00: f64,
    pub m01: f64,
    pub m11: f64,
}

/// Eigen-decomposition of a symmetric 2x2 tensor; `values[0] >= values[1]`,
/// `vectors[k]` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub vectors: [[f64; 2]; 2],
}

impl MetricTensor {
    pub const IDENTITY: MetricTensor = MetricTensor {
        m00: 1.0,
        m01: 0.0,
        m11: 1.0,
    };

    pub const fn new(m00: f64, m01: f64, m11: f64) -> Self {
        MetricTensor { m00, m01, m11 }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        MetricTensor::new(a, 0.0, b)
    }

    /// Isotropic metric asking for edges of Euclidean length `h`.
    pub fn isotropic(h: f64) -> Self {
        let l = 1.0 / (h * h);
        MetricTensor::diag(l, l)
    }

    pub fn det(&self) -> f64 {
        self.m00 * self.m11 - self.m01 * self.m01
    }

    pub fn is_spd(&self) -> bool {
        self.m00 > 0.0 && self.det() > 0.0 && self.m00.is_finite() && self.m11.is_finite() && self.m01.is_finite()
    }

    /// `eᵀ M e`
    #[inline]
    pub fn quadratic(&self, e: [f64; 2]) -> f64 {
        self.m00 * e[0] * e[0] + 2.0 * self.m01 * e[0] * e[1] + self.m11 * e[1] * e[1]
    }

    #[inline]
    pub fn length(&self, e: [f64; 2]) -> f64 {
        self.quadratic(e).max(0.0).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        MetricTensor::new(c * self.m00, c * self.m01, c * self.m11)
    }

    /// Component-wise `(1 - s) a + s b`.
    #[inline]
    pub fn lerp(a: &MetricTensor, b: &MetricTensor, s: f64) -> Self {
        let r = 1.0 - s;
        MetricTensor::new(r * a.m00 + s * b.m00, r * a.m01 + s * b.m01, r * a.m11 + s * b.m11)
    }

    #[inline]
    pub fn mean2(a: &MetricTensor, b: &MetricTensor) -> Self {
        MetricTensor::new(0.5 * (a.m00 + b.m00), 0.5 * (a.m01 + b.m01), 0.5 * (a.m11 + b.m11))
    }

    #[inline]
    pub fn mean3(a: &MetricTensor, b: &MetricTensor, c: &MetricTensor) -> Self {
        const T: f64 = 1.0 / 3.0;
        MetricTensor::new(
            T * (a.m00 + b.m00 + c.m00),
            T * (a.m01 + b.m01 + c.m01),
            T * (a.m11 + b.m11 + c.m11),
        )
    }

    /// Weighted sum with barycentric weights.
    pub fn blend3(weights: [f64; 3], m: [&MetricTensor; 3]) -> Self {
        let mut out = MetricTensor::new(0.0, 0.0, 0.0);
        for (w, t) in weights.iter().zip(m) {
            out.m00 += w * t.m00;
            out.m01 += w * t.m01;
            out.m11 += w * t.m11;
        }
        out
    }

    pub fn eigen(&self) -> Eigen2 {
        let mean = 0.5 * (self.m00 + self.m11);
        let half_diff = 0.5 * (self.m00 - self.m11);
        let r = half_diff.hypot(self.m01);
        let theta = 0.5 * (2.0 * self.m01).atan2(self.m00 - self.m11);
        let (s, c) = theta.sin_cos();
        Eigen2 {
            values: [mean + r, mean - r],
            vectors: [[c, s], [-s, c]],
        }
    }

    pub fn from_eigen(e: &Eigen2) -> Self {
        let [l0, l1] = e.values;
        let [v0, v1] = e.vectors;
        MetricTensor::new(
            l0 * v0[0] * v0[0] + l1 * v1[0] * v1[0],
            l0 * v0[0] * v0[1] + l1 * v1[0] * v1[1],
            l0 * v0[1] * v0[1] + l1 * v1[1] * v1[1],
        )
    }

    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut e = self.eigen();
        e.values = e.values.map(f);
        MetricTensor::from_eigen(&e)
    }
}

/// Metric tensors at vertices, same indexing as the mesh's vertex slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricField {
    pub(crate) tensors: Vec<MetricTensor>,
}

impl MetricField {
    pub fn new(tensors: Vec<MetricTensor>) -> Self {
        MetricField { tensors }
    }

    pub fn uniform(n: usize, m: MetricTensor) -> Self {
        MetricField { tensors: vec![m; n] }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, v: VertexId) -> &MetricTensor {
        &self.tensors[v]
    }

    pub fn set(&mut self, v: VertexId, m: MetricTensor) {
        self.tensors[v] = m;
    }

    pub fn tensors(&self) -> &[MetricTensor] {
        &self.tensors
    }

    pub fn push(&mut self, m: MetricTensor) {
        self.tensors.push(m);
    }

    pub fn map(&self, f: impl Fn(&MetricTensor) -> MetricTensor) -> Self {
        MetricField {
            tensors: self.tensors.iter().map(f).collect(),
        }
    }

    /// Applies a vertex renumbering from [`Mesh::compact`].
    pub fn remap(&mut self, map: &Renumbering) {
        let kept = map.vertices.iter().filter(|&&v| v != INVALID).count();
        let mut out = vec![MetricTensor::IDENTITY; kept];
        for (old, &new) in map.vertices.iter().enumerate() {
            if new != INVALID {
                out[new] = self.tensors[old];
            }
        }
        self.tensors = out;
    }

    /// Metric length of the segment `a -> b` carrying endpoint tensors
    /// `va`, `vb`; the edge metric is their average.
    #[inline]
    pub(crate) fn segment_length(&self, a: [f64; 2], b: [f64; 2], va: VertexId, vb: VertexId) -> f64 {
        let m = MetricTensor::mean2(&self.tensors[va], &self.tensors[vb]);
        m.length([b[0] - a[0], b[1] - a[1]])
    }

    #[inline]
    pub(crate) fn edge_length(&self, mesh: &Mesh, va: VertexId, vb: VertexId) -> f64 {
        self.segment_length(mesh.coords[va], mesh.coords[vb], va, vb)
    }
}

/// Metric length of edge `(vi, vj)`.
pub fn edge_length_metric(mesh: &Mesh, field: &MetricField, vi: VertexId, vj: VertexId) -> Result<f64> {
    for v in [vi, vj] {
        if !mesh.is_vertex_live(v) {
            return Err(Error::InvalidVertex(v));
        }
    }
    Ok(field.edge_length(mesh, vi, vj))
}

pub fn interpolate_metric(ma: &MetricTensor, mb: &MetricTensor, s: f64) -> MetricTensor {
    MetricTensor::lerp(ma, mb, s)
}

/// Metric area and perimeter of a triangle, both measured with the tensor
/// at its centre (the mean of the vertex tensors).
#[inline]
pub fn triangle_measures(p: [[f64; 2]; 3], m: [&MetricTensor; 3]) -> (f64, f64) {
    let centre = MetricTensor::mean3(m[0], m[1], m[2]);
    let area = crate::mesh::triangle_signed_area(p[0], p[1], p[2]);
    let det = centre.det().max(0.0);
    let area_m = det.sqrt() * area;
    let mut perimeter = 0.0;
    for k in 0..3 {
        let (a, b) = (p[k], p[(k + 1) % 3]);
        perimeter += centre.length([b[0] - a[0], b[1] - a[1]]);
    }
    (area_m, perimeter)
}

pub fn element_measures_metric(mesh: &Mesh, field: &MetricField, eid: usize) -> Result<(f64, f64)> {
    let tri = mesh.element(eid).ok_or(Error::InvalidElement(eid))?;
    Ok(triangle_measures(
        tri.map(|v| mesh.coords[v]),
        tri.map(|v| &field.tensors[v]),
    ))
}

/// Parameters of the Hessian-based L^p metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Norm order of the interpolation error being controlled.
    pub p: f64,
    /// Target error scale; the metric is multiplied by `1 / eps`.
    pub eps: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            p: 2.0,
            eps: 0.01,
            h_min: 0.002,
            h_max: 0.2,
        }
    }
}

/// Absolute floor on recovered Hessian eigenvalues; it only keeps the
/// determinant positive and is far below anything the clamps let through.
const HESSIAN_FLOOR: f64 = 1e-10;

impl MetricParams {
    pub fn lambda_floor(&self) -> f64 {
        1.0 / (self.h_max * self.h_max)
    }

    pub fn lambda_cap(&self) -> f64 {
        1.0 / (self.h_min * self.h_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 1 (got {})", self.p)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be > 0 (got {})", self.eps)));
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < h_min < h_max (got {} / {})",
                self.h_min, self.h_max
            )));
        }
        Ok(())
    }

    /// Metric from one recovered Hessian `(h00, h01, h11)`.
    pub fn metric_from_hessian(&self, h: [f64; 3]) -> MetricTensor {
        let abs_h = MetricTensor::new(h[0], h[1], h[2]).map_eigenvalues(|l| l.abs().max(HESSIAN_FLOOR));
        let det = abs_h.det().max(HESSIAN_FLOOR * HESSIAN_FLOOR);
        let scale = det.powf(-1.0 / (2.0 * self.p + 2.0)) / self.eps;
        let (lo, hi) = (self.lambda_floor(), self.lambda_cap());
        abs_h.scale(scale).map_eigenvalues(|l| l.clamp(lo, hi))
    }
}

/// Builds the metric field for a nodal scalar via Hessian recovery and
/// L^p scaling, then clamps eigenvalues to the allowed size range.
pub fn compute_metric(mesh: &Mesh, values: &[f64], params: &MetricParams, workers: &Workers) -> Result<MetricField> {
    params.validate()?;
    let hessians = recover_hessian(mesh, values, workers)?;
    let fallback = MetricTensor::diag(params.lambda_floor(), params.lambda_floor());
    let tensors = hessians
        .iter()
        .enumerate()
        .map(|(v, h)| {
            if mesh.is_vertex_live(v) {
                params.metric_from_hessian(*h)
            } else {
                fallback
            }
        })
        .collect();
    Ok(MetricField { tensors })
}
