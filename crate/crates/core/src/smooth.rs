//! Quality-constrained Laplacian smoothing over colour classes.

use std::time::{Duration, Instant};

use crate::colouring::colour_graph;
use crate::error::{Error, Result};
use crate::mesh::{triangle_signed_area, Mesh, VertexId};
use crate::metric::{MetricField, MetricTensor};
use crate::parallel::{SharedSlice, Workers};
use crate::quality::triangle_quality;
use crate::view::{MeshView, Topology};

/// Per-vertex tensor lookup, from a field or from the shared slice a sweep
/// writes into.
trait Tensors {
    fn tensor(&self, v: VertexId) -> &MetricTensor;

    fn length(&self, a: [f64; 2], b: [f64; 2], va: VertexId, vb: VertexId) -> f64 {
        MetricTensor::mean2(self.tensor(va), self.tensor(vb)).length([b[0] - a[0], b[1] - a[1]])
    }
}

impl Tensors for MetricField {
    fn tensor(&self, v: VertexId) -> &MetricTensor {
        self.get(v)
    }
}

impl Tensors for SharedSlice<'_, MetricTensor> {
    fn tensor(&self, v: VertexId) -> &MetricTensor {
        // SAFETY: a sweep writes only class members' tensors, and a kernel
        // reads its own tensor and those of its neighbours only.
        unsafe { self.get(v) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SmoothParams {
    /// Minimum gain in patch quality for a move to be accepted.
    pub sigma_q: f64,
    /// Bisection steps back towards the original position.
    pub max_iteration: usize,
    pub max_sweeps: usize,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            sigma_q: 1e-3,
            max_iteration: 3,
            max_sweeps: 10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SmoothStats {
    pub sweeps: usize,
    pub relocations: usize,
    /// Smallest accepted patch-quality gain.
    pub min_gain: f64,
    /// Accepted moves whose gain did not exceed `sigma_q`.
    pub gate_violations: usize,
    pub colour_time: Duration,
}

/// Metric-length weighted barycentre of the neighbours of `vi`.
fn proposal<T: Topology, F: Tensors + ?Sized>(m: &T, field: &F, vi: VertexId) -> Option<[f64; 2]> {
    let p = m.xy(vi);
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for &vj in m.nn(vi) {
        let q = m.xy(vj);
        let w = field.length(p, q, vi, vj);
        sx += w * q[0];
        sy += w * q[1];
        sw += w;
    }
    (m.nn(vi).len() >= 2 && sw > 0.0 && sw.is_finite()).then(|| [sx / sw, sy / sw])
}

pub fn laplacian_proposal(mesh: &Mesh, field: &MetricField, vi: VertexId) -> Result<[f64; 2]> {
    if !mesh.is_vertex_live(vi) {
        return Err(Error::InvalidVertex(vi));
    }
    proposal(mesh, field, vi).ok_or(Error::DegeneratePatch(vi))
}

/// Metric at `x` from the element of `vi`'s original patch that contains
/// it, or `None` when `x` lies outside the patch.
fn patch_metric<T: Topology, F: Tensors + ?Sized>(m: &T, field: &F, vi: VertexId, x: [f64; 2]) -> Option<MetricTensor> {
    const SLACK: f64 = 1e-12;
    for &e in m.ne(vi) {
        let t = m.tri(e);
        let p = t.map(|v| m.xy(v));
        let area = triangle_signed_area(p[0], p[1], p[2]);
        if !(area > 0.0) {
            continue;
        }
        let l = [
            triangle_signed_area(x, p[1], p[2]) / area,
            triangle_signed_area(p[0], x, p[2]) / area,
            triangle_signed_area(p[0], p[1], x) / area,
        ];
        if l.iter().all(|&w| w >= -SLACK) {
            return Some(MetricTensor::blend3(l, t.map(|v| field.tensor(v))));
        }
    }
    None
}

/// Worst quality around `vi` if it sat at `x` carrying tensor `mx`.
fn trial_quality<T: Topology, F: Tensors + ?Sized>(
    m: &T,
    field: &F,
    vi: VertexId,
    x: [f64; 2],
    mx: &MetricTensor,
) -> f64 {
    m.ne(vi)
        .iter()
        .map(|&e| {
            let t = m.tri(e);
            triangle_quality(
                t.map(|v| if v == vi { x } else { m.xy(v) }),
                t.map(|v| if v == vi { mx } else { field.tensor(v) }),
            )
        })
        .fold(f64::INFINITY, f64::min)
}

struct Move {
    xy: [f64; 2],
    metric: MetricTensor,
    gain: f64,
}

fn smart_move<T: Topology, F: Tensors + ?Sized>(m: &T, field: &F, vi: VertexId, params: &SmoothParams) -> Option<Move> {
    let origin = m.xy(vi);
    let q0 = trial_quality(m, field, vi, origin, field.tensor(vi));
    let mut x = proposal(m, field, vi)?;
    let score = |x: [f64; 2]| match patch_metric(m, field, vi, x) {
        Some(mx) => (trial_quality(m, field, vi, x, &mx), mx),
        None => (0.0, *field.tensor(vi)),
    };
    let (mut q, mut mx) = score(x);
    let mut n = 1;
    while n <= params.max_iteration && q - q0 < params.sigma_q {
        x = [0.5 * (x[0] + origin[0]), 0.5 * (x[1] + origin[1])];
        (q, mx) = score(x);
        n += 1;
    }
    (q - q0 > params.sigma_q).then_some(Move {
        xy: x,
        metric: mx,
        gain: q - q0,
    })
}

/// Whether `vi` may move: interior, with a closed ring of elements.
fn movable<T: Topology>(m: &T, vi: VertexId) -> bool {
    let ne = m.ne(vi).len();
    !m.tag(vi).is_boundary() && ne >= 3 && ne == m.nn(vi).len()
}

/// One smart-smoothing attempt on `vi`; returns whether it moved.
pub fn smart_smooth_kernel(
    mesh: &mut Mesh,
    field: &mut MetricField,
    vi: VertexId,
    params: &SmoothParams,
) -> Result<bool> {
    if !mesh.is_vertex_live(vi) {
        return Err(Error::InvalidVertex(vi));
    }
    if !movable(mesh, vi) {
        return Ok(false);
    }
    match smart_move(mesh, field, vi, params) {
        Some(mv) => {
            mesh.set_coord(vi, mv.xy);
            field.set(vi, mv.metric);
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Sweeps all colour classes until nothing moves or `max_sweeps` is hit.
pub fn smooth_pass(
    mesh: &mut Mesh,
    field: &mut MetricField,
    params: &SmoothParams,
    workers: &Workers,
) -> Result<SmoothStats> {
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} metric tensors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    let mut stats = SmoothStats {
        min_gain: f64::INFINITY,
        ..SmoothStats::default()
    };
    if params.max_sweeps == 0 {
        stats.min_gain = 0.0;
        return Ok(stats);
    }
    let t0 = Instant::now();
    let colours = colour_graph(mesh, workers);
    stats.colour_time = t0.elapsed();
    let mut classes: Vec<Vec<VertexId>> = vec![Vec::new(); colours.n_colours()];
    for v in mesh.live_vertices() {
        if movable(mesh, v) {
            classes[colours.colour(v)].push(v);
        }
    }

    while stats.sweeps < params.max_sweeps {
        stats.sweeps += 1;
        let mut relocated = 0;
        for class in &classes {
            let view = MeshView::new(mesh);
            let tensors = SharedSlice::new(&mut field.tensors);
            let (view, tensors) = (&view, &tensors);
            let results = workers.run(|w| {
                let mut moved = 0usize;
                let mut min_gain = f64::INFINITY;
                let mut violations = 0;
                for &vi in &class[workers.static_range(class.len(), w)] {
                    if let Some(mv) = smart_move(view, tensors, vi, params) {
                        // SAFETY: vi is owned by this kernel within the class.
                        unsafe {
                            view.set_xy(vi, mv.xy);
                            *tensors.get_mut(vi) = mv.metric;
                        }
                        moved += 1;
                        min_gain = min_gain.min(mv.gain);
                        if !(mv.gain > params.sigma_q) {
                            violations += 1;
                        }
                    }
                }
                (moved, min_gain, violations)
            });
            for (moved, min_gain, violations) in results {
                relocated += moved;
                stats.min_gain = stats.min_gain.min(min_gain);
                stats.gate_violations += violations;
            }
        }
        stats.relocations += relocated;
        if relocated == 0 {
            break;
        }
    }
    if stats.relocations == 0 {
        stats.min_gain = 0.0;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{all_qualities, patch_quality};

    fn star(centre: [f64; 2]) -> Mesh {
        let mut coords = vec![centre];
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            coords.push([a.cos(), a.sin()]);
        }
        let elements = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        Mesh::build_adjacency(elements, coords, true).unwrap()
    }

    #[test]
    fn symmetric_patch_is_fixed_point() {
        let mesh = star([0.0, 0.0]);
        let field = MetricField::uniform(7, MetricTensor::IDENTITY);
        let p = laplacian_proposal(&mesh, &field, 0).unwrap();
        assert!(p[0].abs() < 1e-15 && p[1].abs() < 1e-15);
        let mut mesh = mesh;
        let mut field = field;
        assert!(!smart_smooth_kernel(&mut mesh, &mut field, 0, &SmoothParams::default()).unwrap());
        assert_eq!(mesh.coord(0), [0.0, 0.0]);
    }

    #[test]
    fn proposal_ignores_metric_scale() {
        let mesh = star([0.2, -0.1]);
        let a = laplacian_proposal(&mesh, &MetricField::uniform(7, MetricTensor::new(2.0, 0.3, 1.0)), 0).unwrap();
        let b = laplacian_proposal(&mesh, &MetricField::uniform(7, MetricTensor::new(8.0, 1.2, 4.0)), 0).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
    }

    #[test]
    fn two_neighbour_proposal() {
        let mesh =
            Mesh::build_adjacency(vec![[0, 1, 2]], vec![[0.0, 0.0], [0.5, 0.0], [2.0, 0.0 + 1.0]], false).unwrap();
        // Put the far neighbour on the axis after assembly.
        let mut mesh = mesh;
        mesh.adjacency[1].nn.retain(|&v| v != 0 && v != 2);
        mesh.adjacency[1].nn.extend([0, 2]);
        mesh.set_coord(2, [2.0, 0.0]);
        let field = MetricField::uniform(3, MetricTensor::IDENTITY);
        let p = laplacian_proposal(&mesh, &field, 1).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn skewed_patch_improves() {
        let mut mesh = star([0.45, 0.3]);
        let mut field = MetricField::uniform(7, MetricTensor::IDENTITY);
        let before = patch_quality(&mesh, &field, 0).unwrap();
        assert!(smart_smooth_kernel(&mut mesh, &mut field, 0, &SmoothParams::default()).unwrap());
        assert!(patch_quality(&mesh, &field, 0).unwrap() > before + 1e-3);
    }

    #[test]
    fn inverting_proposal_rejected() {
        // Weighted barycentre lands outside the tiny reflex patch.
        let mut coords = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.02, 0.05],
            [-0.05, 0.02],
            [-0.05, -0.02],
            [0.02, -0.05],
        ];
        coords[0] = [-0.01, 0.0];
        let elements = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 1]];
        let mut mesh = Mesh::build_adjacency(elements, coords, true).unwrap();
        let field = MetricField::uniform(6, MetricTensor::IDENTITY);
        let start = mesh.coord(0);
        let params = SmoothParams::default();
        let mut field2 = field.clone();
        // Vertex 0 sits inside; its ring is closed so it is movable.
        let moved = smart_smooth_kernel(&mut mesh, &mut field2, 0, &params).unwrap();
        if !moved {
            assert_eq!(mesh.coord(0), start);
        }
        assert!(mesh.verify().is_empty());
    }

    #[test]
    fn no_sweeps_is_noop() {
        let mut mesh = star([0.3, 0.3]);
        let mut field = MetricField::uniform(7, MetricTensor::IDENTITY);
        let params = SmoothParams {
            max_sweeps: 0,
            ..SmoothParams::default()
        };
        let stats = smooth_pass(&mut mesh, &mut field, &params, &Workers::serial()).unwrap();
        assert_eq!(stats.sweeps, 0);
        assert_eq!(mesh.coord(0), [0.3, 0.3]);
    }

    #[test]
    fn structured_mesh_already_smooth() {
        let mut mesh = Mesh::structured(7, 7).unwrap();
        let mut field = MetricField::uniform(49, MetricTensor::isotropic(1.0 / 6.0));
        let stats = smooth_pass(
            &mut mesh,
            &mut field,
            &SmoothParams::default(),
            &Workers::new(2).unwrap(),
        )
        .unwrap();
        assert_eq!(stats.relocations, 0);
        assert_eq!(stats.sweeps, 1);
    }

    #[test]
    fn perturbed_vertex_returns() {
        let mut mesh = Mesh::structured(7, 7).unwrap();
        let centre = 3 * 7 + 3;
        mesh.set_coord(centre, [0.5 + 0.08, 0.5 - 0.05]);
        let mut field = MetricField::uniform(49, MetricTensor::isotropic(1.0 / 6.0));
        let min_before = all_qualities(&mesh, &field).into_iter().fold(1.0, f64::min);
        let stats = smooth_pass(
            &mut mesh,
            &mut field,
            &SmoothParams::default(),
            &Workers::new(2).unwrap(),
        )
        .unwrap();
        assert!(stats.relocations > 0);
        assert_eq!(stats.gate_violations, 0);
        let min_after = all_qualities(&mesh, &field).into_iter().fold(1.0, f64::min);
        assert!(min_after >= min_before);
        let p = mesh.coord(centre);
        assert!((p[0] - 0.5).hypot(p[1] - 0.5) < (0.08f64).hypot(0.05));
        assert!(mesh.verify().is_empty());
    }
}
