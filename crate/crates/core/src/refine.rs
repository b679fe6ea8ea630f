//! Edge refinement followed by element subdivision (1:2, 1:3, 1:4).
//!
//! No colouring is needed. Edges are discovered per lower-id endpoint, new
//! vertex ids come from one atomic capture per worker, and NN updates for
//! split edges are applied in place by the worker owning each vertex. Only
//! the element phase defers its NN/NE edits.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, ElementId, Mesh, VertexAdjacency, VertexId, INVALID};
use crate::metric::{interpolate_metric, MetricField, MetricTensor};
use crate::parallel::{AdjacencyEdit, CommitStats, DeferredOps, DynamicCursor, SharedSlice, Workers, Worklist};

pub const DEFAULT_L_MAX: f64 = std::f64::consts::SQRT_2;

const CHUNK: usize = 256;

/// An edge scheduled for bisection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitEdge {
    pub vi: VertexId,
    pub vj: VertexId,
    pub vn: VertexId,
    pub midpoint: [f64; 2],
    pub metric: MetricTensor,
    tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Tag {
    #[default]
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Default)]
pub struct RefineStats {
    pub edges_examined: usize,
    pub splits: usize,
    pub bisected: usize,
    pub trisected: usize,
    pub quadrisected: usize,
    pub elements_created: usize,
    pub commit: CommitStats,
    pub commit_time: Duration,
}

/// Edge `k` of a triangle is `(t[k], t[(k + 1) % 3])`.
fn edge_slot(t: [VertexId; 3], a: VertexId, b: VertexId) -> Option<usize> {
    (0..3).find(|&k| {
        let (p, q) = (t[k], t[(k + 1) % 3]);
        (p == a && q == b) || (p == b && q == a)
    })
}

struct Children {
    kids: [[VertexId; 3]; 4],
    n_kids: usize,
    edges: [[VertexId; 2]; 3],
    n_edges: usize,
}

impl Children {
    fn kids(&self) -> &[[VertexId; 3]] {
        &self.kids[..self.n_kids]
    }

    fn new_edges(&self) -> &[[VertexId; 2]] {
        &self.edges[..self.n_edges]
    }
}

/// Children of parent `t` given per-edge midpoints (`INVALID` = not split).
/// Needs at least one split edge.
fn subdivide(coords: &[[f64; 2]], field: &MetricField, t: [VertexId; 3], mids: [VertexId; 3]) -> Children {
    let marked = mids.iter().filter(|&&m| m != INVALID).count();
    let mut out = Children {
        kids: [[INVALID; 3]; 4],
        n_kids: 0,
        edges: [[INVALID; 2]; 3],
        n_edges: 0,
    };
    match marked {
        1 => {
            let k = (0..3).find(|&k| mids[k] != INVALID).unwrap();
            let (t0, t1, t2, m) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3], mids[k]);
            out.kids[0] = [t0, m, t2];
            out.kids[1] = [m, t1, t2];
            out.n_kids = 2;
            out.edges[0] = [m, t2];
            out.n_edges = 1;
        }
        2 => {
            let u = (0..3).find(|&k| mids[k] == INVALID).unwrap();
            let (a, b) = ((u + 1) % 3, (u + 2) % 3);
            let (t0, t1, t2) = (t[a], t[b], t[u]);
            let (m01, m12) = (mids[a], mids[b]);
            out.kids[0] = [m01, t1, m12];
            let diag_a = field.segment_length(coords[t0], coords[m12], t0, m12);
            let diag_b = field.segment_length(coords[m01], coords[t2], m01, t2);
            if diag_a <= diag_b {
                out.kids[1] = [t0, m01, m12];
                out.kids[2] = [t0, m12, t2];
                out.edges[1] = [t0, m12];
            } else {
                out.kids[1] = [t0, m01, t2];
                out.kids[2] = [m01, m12, t2];
                out.edges[1] = [m01, t2];
            }
            out.edges[0] = [m01, m12];
            out.n_kids = 3;
            out.n_edges = 2;
        }
        3 => {
            let [t0, t1, t2] = t;
            let [m0, m1, m2] = mids;
            out.kids = [[t0, m0, m2], [m0, t1, m1], [m2, m1, t2], [m0, m1, m2]];
            out.n_kids = 4;
            out.edges = [[m0, m1], [m1, m2], [m2, m0]];
            out.n_edges = 3;
        }
        _ => unreachable!("subdivide needs 1 to 3 split edges"),
    }
    out
}

/// Child triples of element `eid` when the edges with a midpoint are
/// split; the first child takes the parent's slot. The midpoints must
/// already exist in the mesh and field.
pub fn split_element(
    mesh: &Mesh,
    field: &MetricField,
    eid: ElementId,
    midpoints: [Option<VertexId>; 3],
) -> Result<Vec<[VertexId; 3]>> {
    let t = mesh.element(eid).ok_or(Error::InvalidElement(eid))?;
    if midpoints.iter().all(Option::is_none) {
        return Err(Error::NoMarkedEdges(eid));
    }
    for &m in midpoints.iter().flatten() {
        if m >= mesh.n_vertices() || m >= field.len() {
            return Err(Error::InvalidVertex(m));
        }
    }
    let mids = midpoints.map(|m| m.unwrap_or(INVALID));
    Ok(subdivide(&mesh.coords, field, t, mids).kids().to_vec())
}

/// Bisects every edge longer than `l_max` and subdivides the elements
/// around it. Every edge is judged against the metric at pass start.
pub fn refine_pass(mesh: &mut Mesh, field: &mut MetricField, l_max: f64, workers: &Workers) -> Result<RefineStats> {
    if !(l_max > 0.0) {
        return Err(Error::InvalidParameter(format!("L_max must be positive (got {l_max})")));
    }
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} metric tensors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    let n_v = mesh.n_vertices();
    let n_e = mesh.n_elements();
    let mut stats = RefineStats::default();

    // Edge phase: find long edges, capture ids once per worker.
    let worklist: Worklist<SplitEdge> = Worklist::with_capacity(mesh.n_edges());
    let mut ranges = vec![(0usize, 0usize); n_v];
    {
        let mesh = &*mesh;
        let field = &*field;
        let ranges = SharedSlice::new(&mut ranges);
        let cursor = DynamicCursor::new(n_v, CHUNK);
        let examined = workers.run(|_| {
            let mut local = Vec::new();
            let mut owned = Vec::new();
            let mut examined = 0;
            while let Some(chunk) = cursor.next_chunk() {
                for vi in chunk {
                    let start = local.len();
                    for &vj in mesh.neighbours(vi) {
                        if vj <= vi {
                            continue;
                        }
                        examined += 1;
                        if field.edge_length(mesh, vi, vj) > l_max {
                            let (a, b) = (mesh.coords[vi], mesh.coords[vj]);
                            let tag = if mesh.edge_elements(vi, vj).count() == 1 {
                                Tag::Boundary
                            } else {
                                Tag::Interior
                            };
                            local.push(SplitEdge {
                                vi,
                                vj,
                                vn: INVALID,
                                midpoint: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                                metric: interpolate_metric(field.get(vi), field.get(vj), 0.5),
                                tag,
                            });
                        }
                    }
                    if local.len() > start {
                        owned.push((vi, start, local.len() - start));
                    }
                }
            }
            let base = worklist.reserve(local.len());
            let offset = base.base();
            for e in local.iter_mut().enumerate() {
                e.1.vn = n_v + offset + e.0;
            }
            base.fill(&local);
            for (vi, start, count) in owned {
                // SAFETY: each vertex is visited by exactly one worker.
                unsafe { *ranges.get_mut(vi) = (offset + start, count) };
            }
            examined
        });
        stats.edges_examined = examined.into_iter().sum();
    }
    let splits = worklist.into_vec();
    stats.splits = splits.len();
    if splits.is_empty() {
        return Ok(stats);
    }

    for s in &splits {
        debug_assert_eq!(s.vn, mesh.coords.len());
        mesh.coords.push(s.midpoint);
        mesh.adjacency.push(VertexAdjacency {
            nn: vec![s.vi, s.vj],
            ne: Vec::new(),
        });
        mesh.boundary.push(match s.tag {
            Tag::Boundary if mesh.tracks_boundary => BoundaryTag::Boundary,
            _ => BoundaryTag::Interior,
        });
        field.push(s.metric);
    }

    // Split-edge phase: rewire NN of the original endpoints in place and
    // record which element edges were split.
    let marks: Vec<[AtomicUsize; 3]> = (0..n_e)
        .map(|_| {
            [
                AtomicUsize::new(INVALID),
                AtomicUsize::new(INVALID),
                AtomicUsize::new(INVALID),
            ]
        })
        .collect();
    {
        let Mesh {
            elements, adjacency, ..
        } = &mut *mesh;
        let elements = &*elements;
        let adjacency = SharedSlice::new(&mut adjacency[..n_v]);
        let (ranges, splits, marks) = (&ranges, &splits, &marks);
        workers.dynamic(
            n_v,
            CHUNK,
            |_| (),
            |_, v| {
                // SAFETY: vertex v's lists are touched only by this iteration.
                let adj = unsafe { adjacency.get_mut(v) };
                for slot in adj.nn.iter_mut() {
                    let w = *slot;
                    let (lo, hi) = if v < w { (v, w) } else { (w, v) };
                    if lo >= n_v {
                        continue;
                    }
                    let (s, c) = ranges[lo];
                    if let Some(e) = splits[s..s + c].iter().find(|e| e.vj == hi) {
                        *slot = e.vn;
                    }
                }
                let (s, c) = ranges[v];
                for sp in &splits[s..s + c] {
                    for &e in &adj.ne {
                        if let Some(k) = edge_slot(elements[e], v, sp.vj) {
                            marks[e][k].store(sp.vn, Ordering::Relaxed);
                        }
                    }
                }
            },
        );
    }

    // Element phase.
    let mut buffer: DeferredOps<AdjacencyEdit> = DeferredOps::new(workers.count());
    let appended: Worklist<[VertexId; 3]> = Worklist::with_capacity(2 * splits.len() + 8);
    {
        let Mesh { elements, coords, .. } = &mut *mesh;
        let coords = &*coords;
        let field = &*field;
        let elems = SharedSlice::new(&mut elements[..]);
        let (marks, buffer, appended) = (&marks, &buffer, &appended);
        let cursor = DynamicCursor::new(n_e, CHUNK);
        let counts = workers.run(|w| {
            let mut row = buffer.row(w);
            let mut extra: Vec<[VertexId; 3]> = Vec::new();
            let mut counts = [0usize; 3];
            while let Some(chunk) = cursor.next_chunk() {
                for e in chunk {
                    // SAFETY: element slot e is owned by this iteration.
                    let parent = unsafe { *elems.get(e) };
                    if parent[0] == INVALID {
                        continue;
                    }
                    let mids = [0, 1, 2].map(|k| marks[e][k].load(Ordering::Relaxed));
                    if mids.iter().all(|&m| m == INVALID) {
                        continue;
                    }
                    let split = subdivide(coords, field, parent, mids);
                    let kids = split.kids();
                    counts[kids.len() - 2] += 1;
                    unsafe { *elems.get_mut(e) = kids[0] };
                    for &v in &kids[0] {
                        if !parent.contains(&v) {
                            row.push(AdjacencyEdit::AddElement { vertex: v, element: e });
                        }
                    }
                    for &[a, b] in split.new_edges() {
                        row.push(AdjacencyEdit::AddNeighbour {
                            vertex: a,
                            neighbour: b,
                        });
                        row.push(AdjacencyEdit::AddNeighbour {
                            vertex: b,
                            neighbour: a,
                        });
                    }
                    extra.extend_from_slice(&kids[1..]);
                    for &v in &parent {
                        if !kids[0].contains(&v) {
                            row.push(AdjacencyEdit::RemoveElement { vertex: v, element: e });
                        }
                    }
                }
            }
            let base = n_e + appended.push_slice(&extra);
            for (i, kid) in extra.iter().enumerate() {
                for &v in kid {
                    row.push(AdjacencyEdit::AddElement {
                        vertex: v,
                        element: base + i,
                    });
                }
            }
            counts
        });
        for c in counts {
            stats.bisected += c[0];
            stats.trisected += c[1];
            stats.quadrisected += c[2];
        }
    }
    let appended = appended.into_vec();
    stats.elements_created = appended.len();
    mesh.elements.extend_from_slice(&appended);

    let t0 = Instant::now();
    stats.commit = buffer.commit(workers, &mut mesh.adjacency, |_, adj, edit| edit.apply(adj));
    stats.commit_time = t0.elapsed();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangle_signed_area;

    fn single(p: [[f64; 2]; 3]) -> Mesh {
        Mesh::build_adjacency(vec![[0, 1, 2]], p.to_vec(), true).unwrap()
    }

    fn area_of(mesh: &Mesh, t: [VertexId; 3]) -> f64 {
        triangle_signed_area(mesh.coord(t[0]), mesh.coord(t[1]), mesh.coord(t[2]))
    }

    #[test]
    fn short_edges_untouched() {
        let mut mesh = Mesh::structured(4, 4).unwrap();
        let mut field = MetricField::uniform(16, MetricTensor::IDENTITY);
        let before = mesh.element_nodes().to_vec();
        let stats = refine_pass(&mut mesh, &mut field, DEFAULT_L_MAX, &Workers::serial()).unwrap();
        assert_eq!(stats.splits, 0);
        assert_eq!(stats.edges_examined, mesh.n_edges());
        assert_eq!(mesh.element_nodes(), &before[..]);
    }

    #[test]
    fn one_long_edge_bisects() {
        // Only the bottom edge exceeds L_max under a metric stretched in x.
        let mut mesh = single([[0.0, 0.0], [1.0, 0.0], [0.5, 0.2]]);
        let mut field = MetricField::uniform(3, MetricTensor::diag(9.0, 1.0));
        let stats = refine_pass(&mut mesh, &mut field, 2.0, &Workers::serial()).unwrap();
        assert_eq!(stats.splits, 1);
        assert_eq!(mesh.n_live_elements(), 2);
        assert!(mesh.verify().is_empty(), "{}", mesh.verify());
    }

    #[test]
    fn all_long_edges_regular_split() {
        let mut mesh = single([[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]]);
        let mut field = MetricField::uniform(3, MetricTensor::diag(4.0, 4.0));
        let stats = refine_pass(&mut mesh, &mut field, DEFAULT_L_MAX, &Workers::serial()).unwrap();
        assert_eq!(stats.splits, 3);
        assert_eq!(stats.quadrisected, 1);
        assert_eq!(mesh.n_live_elements(), 4);
        assert!(mesh.verify().is_empty());
        let quarter = 0.25 * 0.5 * 0.75f64.sqrt();
        for (_, t) in mesh.live_elements() {
            assert!((area_of(&mesh, t) - quarter).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_long_edge_makes_one_midpoint() {
        let mesh_coords = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut mesh = Mesh::build_adjacency(vec![[0, 1, 2], [0, 2, 3]], mesh_coords, true).unwrap();
        // Stretch along the diagonal so only (0,2) is long.
        let m = MetricTensor::new(2.5, 2.0, 2.5);
        let mut field = MetricField::uniform(4, m);
        let stats = refine_pass(&mut mesh, &mut field, 2.5, &Workers::new(2).unwrap()).unwrap();
        assert_eq!(stats.splits, 1);
        assert_eq!(mesh.n_vertices(), 5);
        assert_eq!(mesh.n_live_elements(), 4);
        assert_eq!(mesh.coord(4), [0.5, 0.5]);
        assert!(mesh.verify().is_empty(), "{}", mesh.verify());
        assert_eq!(mesh.neighbours(4).len(), 4);
    }

    #[test]
    fn split_element_children() {
        let mut mesh = single([[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]]);
        let field = MetricField::uniform(6, MetricTensor::IDENTITY);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let (p, q) = (mesh.coord(a), mesh.coord(b));
            mesh.coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        }
        let parent = area_of(&mesh, [0, 1, 2]);
        let four = split_element(&mesh, &field, 0, [Some(3), Some(4), Some(5)]).unwrap();
        assert_eq!(four.len(), 4);
        for t in &four {
            assert!((area_of(&mesh, *t) - parent / 4.0).abs() < 1e-12);
        }
        let two = split_element(&mesh, &field, 0, [None, Some(4), None]).unwrap();
        assert_eq!(two.len(), 2);
        for t in &two {
            assert!((area_of(&mesh, *t) - parent / 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            split_element(&mesh, &field, 0, [None; 3]),
            Err(Error::NoMarkedEdges(0))
        ));
    }

    #[test]
    fn trisection_takes_shorter_metric_diagonal() {
        let mut mesh = single([[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]]);
        for (a, b) in [(0, 1), (1, 2)] {
            let (p, q) = (mesh.coord(a), mesh.coord(b));
            mesh.coords.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            mesh.adjacency.push(VertexAdjacency {
                nn: vec![a, b],
                ne: vec![],
            });
            mesh.boundary.push(BoundaryTag::Boundary);
        }
        for m in [MetricTensor::diag(50.0, 1.0), MetricTensor::diag(1.0, 50.0)] {
            let field = MetricField::uniform(5, m);
            let kids = split_element(&mesh, &field, 0, [Some(3), Some(4), None]).unwrap();
            assert_eq!(kids.len(), 3);
            let total: f64 = kids.iter().map(|&t| area_of(&mesh, t)).sum();
            assert!((total - area_of(&mesh, [0, 1, 2])).abs() < 1e-12);
            let la = crate::metric::edge_length_metric(&mesh, &field, 0, 4).unwrap();
            let lb = crate::metric::edge_length_metric(&mesh, &field, 3, 2).unwrap();
            let uses = |a: usize, b: usize| kids.iter().any(|t| t.contains(&a) && t.contains(&b));
            if la <= lb {
                assert!(uses(0, 4) && !uses(3, 2));
            } else {
                assert!(uses(3, 2) && !uses(0, 4));
            }
        }
    }

    #[test]
    fn refine_keeps_area_and_interpolates_metric() {
        let mut mesh = Mesh::structured(6, 6).unwrap();
        let tensors = (0..36)
            .map(|v| MetricTensor::diag(40.0 + v as f64, 60.0 - v as f64))
            .collect();
        let mut field = MetricField::new(tensors);
        let before = mesh.total_area();
        let n_old = mesh.n_vertices();
        let stats = refine_pass(&mut mesh, &mut field, DEFAULT_L_MAX, &Workers::new(3).unwrap()).unwrap();
        assert!(stats.splits > 0);
        assert!(mesh.verify().is_empty(), "{}", mesh.verify());
        assert!((mesh.total_area() - before).abs() < 1e-9);
        for v in n_old..mesh.n_vertices() {
            let nb: Vec<usize> = mesh.neighbours(v).iter().copied().filter(|&w| w < n_old).collect();
            let parents = nb
                .iter()
                .flat_map(|&a| nb.iter().map(move |&b| (a, b)))
                .find(|&(a, b)| {
                    let (p, q) = (mesh.coord(a), mesh.coord(b));
                    a < b && mesh.coord(v) == [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
                });
            let (a, b) = parents.expect("midpoint parents");
            assert_eq!(*field.get(v), interpolate_metric(field.get(a), field.get(b), 0.5));
        }
    }
}
