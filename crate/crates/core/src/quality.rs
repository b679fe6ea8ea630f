//! Anisotropic triangle quality: a shape factor times a size factor, both
//! measured in the metric at the element centre.

use crate::error::{Error, Result};
use crate::mesh::{triangle_signed_area, ElementId, Mesh, VertexId};
use crate::metric::{triangle_measures, MetricField, MetricTensor};

const SHAPE_NORMALISER: f64 = 12.0 * 1.732_050_807_568_877_2;

/// Size factor `F(x) = (min(x, 1/x) (2 - min(x, 1/x)))³`, unity at `x = 1`.
pub fn sizing_factor(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("sizing factor needs x > 0 (got {x})")));
    }
    Ok(sizing_factor_unchecked(x))
}

#[inline]
pub(crate) fn sizing_factor_unchecked(x: f64) -> f64 {
    let m = x.min(1.0 / x);
    let f = m * (2.0 - m);
    f * f * f
}

/// Quality of the triangle `p` with vertex metrics `m`; zero when the
/// triangle is degenerate or inverted.
#[inline]
pub fn triangle_quality(p: [[f64; 2]; 3], m: [&MetricTensor; 3]) -> f64 {
    if !(triangle_signed_area(p[0], p[1], p[2]) > 0.0) {
        return 0.0;
    }
    let (area, perimeter) = triangle_measures(p, m);
    if !(area > 0.0) || !(perimeter > 0.0) {
        return 0.0;
    }
    let shape = SHAPE_NORMALISER * area / (perimeter * perimeter);
    (shape * sizing_factor_unchecked(perimeter / 3.0)).clamp(0.0, 1.0)
}

pub fn element_quality(mesh: &Mesh, field: &MetricField, eid: ElementId) -> Result<f64> {
    let tri = mesh.element(eid).ok_or(Error::InvalidElement(eid))?;
    Ok(element_quality_unchecked(mesh, field, tri))
}

#[inline]
pub(crate) fn element_quality_unchecked(mesh: &Mesh, field: &MetricField, tri: [VertexId; 3]) -> f64 {
    triangle_quality(tri.map(|v| mesh.coords[v]), tri.map(|v| &field.tensors[v]))
}

/// Worst element quality around `vi`.
pub fn patch_quality(mesh: &Mesh, field: &MetricField, vi: VertexId) -> Result<f64> {
    if vi >= mesh.n_vertices() || mesh.incident_elements(vi).is_empty() {
        return Err(Error::InvalidVertex(vi));
    }
    Ok(mesh
        .incident_elements(vi)
        .iter()
        .map(|&e| element_quality_unchecked(mesh, field, mesh.elements[e]))
        .fold(f64::INFINITY, f64::min))
}

/// Qualities of every live element.
pub fn all_qualities(mesh: &Mesh, field: &MetricField) -> Vec<f64> {
    mesh.live_elements()
        .map(|(_, tri)| element_quality_unchecked(mesh, field, tri))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const S3: f64 = 1.732_050_807_568_877_2;

    fn equilateral(side: f64) -> [[f64; 2]; 3] {
        [[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * S3 * side]]
    }

    fn id3() -> [&'static MetricTensor; 3] {
        [&MetricTensor::IDENTITY; 3]
    }

    #[test]
    fn sizing_factor_values() {
        assert_eq!(sizing_factor(1.0).unwrap(), 1.0);
        assert!(sizing_factor(1e-9).unwrap() < 1e-8);
        assert!(sizing_factor(1e9).unwrap() < 1e-8);
        assert!((sizing_factor(2.0).unwrap() - 0.421875).abs() < 1e-15);
        assert!((sizing_factor(0.5).unwrap() - 0.421875).abs() < 1e-15);
        assert!(sizing_factor(0.0).is_err());
        assert!(sizing_factor(-1.0).is_err());
    }

    #[test]
    fn unit_equilateral_is_perfect() {
        assert!((triangle_quality(equilateral(1.0), id3()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_zero() {
        assert_eq!(triangle_quality([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], id3()), 0.0);
    }

    #[test]
    fn double_size_equilateral() {
        assert!((triangle_quality(equilateral(2.0), id3()) - 0.421875).abs() < 1e-12);
    }

    #[test]
    fn inverted_is_zero() {
        let mut p = equilateral(1.0);
        p.swap(1, 2);
        assert_eq!(triangle_quality(p, id3()), 0.0);
    }

    #[test]
    fn quality_peaks_at_unit_length() {
        let c = 4.0;
        let m = MetricTensor::diag(c, c);
        let q = |l: f64| triangle_quality(equilateral(l / c.sqrt()), [&m; 3]);
        assert!(q(1.0) > q(0.5) && q(1.0) > q(2.0));
        assert!((q(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_and_rigid_motion_invariance() {
        let p = [[0.1, 0.2], [0.9, 0.35], [0.3, 0.8]];
        let m = MetricTensor::diag(2.0, 2.0);
        let q = triangle_quality(p, [&m; 3]);
        assert!((triangle_quality([p[1], p[2], p[0]], [&m; 3]) - q).abs() < 1e-14);
        let (s, c) = 0.7f64.sin_cos();
        let moved = p.map(|x| [c * x[0] - s * x[1] + 3.0, s * x[0] + c * x[1] - 1.0]);
        assert!((triangle_quality(moved, [&m; 3]) - q).abs() < 1e-12);
    }

    #[test]
    fn patch_quality_is_minimum() {
        let mut mesh = Mesh::structured(3, 3).unwrap();
        mesh.set_coord(4, [0.6, 0.45]);
        let field = MetricField::uniform(9, MetricTensor::isotropic(0.5));
        let pq = patch_quality(&mesh, &field, 4).unwrap();
        let each: Vec<f64> = mesh
            .incident_elements(4)
            .iter()
            .map(|&e| element_quality(&mesh, &field, e).unwrap())
            .collect();
        assert!(each.iter().all(|&q| pq <= q));
        assert!(each.contains(&pq));
        // Corner vertex 2 has exactly one element.
        assert_eq!(mesh.incident_elements(2).len(), 1);
        let e = mesh.incident_elements(2)[0];
        assert_eq!(
            patch_quality(&mesh, &field, 2).unwrap(),
            element_quality(&mesh, &field, e).unwrap()
        );
    }
}
