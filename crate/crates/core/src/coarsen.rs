//! Edge-collapse coarsening over colour classes.
//!
//! Each vertex carries a dynamic state: re-evaluate, cannot collapse, or
//! a collapse target. A collapse moves `vi` onto its target `vt` and
//! deletes the elements on edge `(vi, vt)`. All edits to vertices other
//! than `vi` go through the deferred buffer.

use std::sync::atomic::{AtomicIsize, Ordering};
use std::time::{Duration, Instant};

use crate::colouring::{colour_graph, repair_colouring};
use crate::error::{Error, Result};
use crate::mesh::{triangle_signed_area, BoundaryTag, Mesh, VertexId, INVALID};
use crate::metric::MetricField;
use crate::parallel::{AdjacencyEdit, CommitStats, DeferRow, DeferredOps, DynamicCursor, Workers};
use crate::view::{MeshView, Topology};

pub const DEFAULT_L_MIN: f64 = std::f64::consts::FRAC_1_SQRT_2;

const CHUNK: usize = 256;
const CANNOT_COLLAPSE: isize = -1;
const REEVALUATE: isize = -2;

#[derive(Debug, Clone, Default)]
pub struct CoarsenStats {
    pub collapses: usize,
    pub iterations: usize,
    pub identify_sweeps: usize,
    pub evaluations: usize,
    /// Collapses dropped because the patch changed after identification.
    pub aborted: usize,
    pub commit: CommitStats,
    pub commit_time: Duration,
    pub colour_time: Duration,
}

/// Whether collapsing `vi` onto `vt` keeps the mesh valid: corners stay,
/// boundary vertices slide only along boundary edges, the link condition
/// holds, no new edge exceeds `l_max` and no element inverts.
fn collapse_legal<T: Topology>(m: &T, field: &MetricField, vi: VertexId, vt: VertexId, l_max: f64) -> bool {
    if vi == vt || !m.nn(vi).contains(&vt) || m.tag(vi) == BoundaryTag::Corner {
        return false;
    }
    let ne = m.ne(vi);
    let mut opposite = [INVALID; 2];
    let mut n_shared = 0;
    for &e in ne {
        let t = m.tri(e);
        if t.contains(&vt) {
            if n_shared == 2 {
                return false;
            }
            opposite[n_shared] = t.into_iter().find(|&v| v != vi && v != vt).unwrap_or(INVALID);
            n_shared += 1;
        }
    }
    let on_boundary = m.tag(vi).is_boundary();
    let legal_count = match n_shared {
        1 => on_boundary || !m.tracks_boundary(),
        2 => !on_boundary || !m.tracks_boundary(),
        _ => false,
    };
    if !legal_count || ne.len() == n_shared {
        return false;
    }
    let opposite = &opposite[..n_shared];
    let nn_t = m.nn(vt);
    let pt = m.xy(vt);
    for &n in m.nn(vi) {
        if n == vt || opposite.contains(&n) {
            continue;
        }
        if nn_t.contains(&n) || field.segment_length(pt, m.xy(n), vt, n) > l_max {
            return false;
        }
    }
    for &e in ne {
        let t = m.tri(e);
        if t.contains(&vt) {
            continue;
        }
        let p = t.map(|v| if v == vi { pt } else { m.xy(v) });
        if !(triangle_signed_area(p[0], p[1], p[2]) > 0.0) {
            return false;
        }
    }
    true
}

/// Whether collapsing `vi` onto `vt` is currently legal.
pub fn collapse_is_legal(mesh: &Mesh, field: &MetricField, vi: VertexId, vt: VertexId, l_max: f64) -> Result<bool> {
    for v in [vi, vt] {
        if !mesh.is_vertex_live(v) {
            return Err(Error::InvalidVertex(v));
        }
    }
    Ok(collapse_legal(mesh, field, vi, vt, l_max))
}

fn identify<T: Topology>(m: &T, field: &MetricField, vi: VertexId, l_min: f64, l_max: f64) -> Option<VertexId> {
    if m.tag(vi) == BoundaryTag::Corner {
        return None;
    }
    let p = m.xy(vi);
    let mut candidates: Vec<(f64, VertexId)> = m
        .nn(vi)
        .iter()
        .map(|&vj| (field.segment_length(p, m.xy(vj), vi, vj), vj))
        .collect();
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates
        .into_iter()
        .take_while(|&(len, _)| len < l_min)
        .map(|(_, vj)| vj)
        .find(|&vt| collapse_legal(m, field, vi, vt, l_max))
}

/// Target of the shortest legal collapse of a sub-`l_min` edge at `vi`,
/// or `None` when no such collapse exists.
pub fn coarsen_identify(
    mesh: &Mesh,
    field: &MetricField,
    vi: VertexId,
    l_min: f64,
    l_max: f64,
) -> Result<Option<VertexId>> {
    if !mesh.is_vertex_live(vi) {
        return Err(Error::InvalidVertex(vi));
    }
    Ok(identify(mesh, field, vi, l_min, l_max))
}

/// Performs the collapse; the caller has checked legality.
fn kernel(view: &MeshView<'_>, vi: VertexId, vt: VertexId, row: &mut DeferRow<'_, AdjacencyEdit>) {
    // SAFETY: vi is in the current independent set, so vi and every
    // element of its patch belong to this kernel alone.
    let adj = unsafe { view.adjacency_mut(vi) };
    let mut common = [INVALID; 2];
    let mut n_common = 0;
    for &e in &adj.ne {
        let t = view.tri(e);
        if t.contains(&vt) {
            for &v in &t {
                if v != vi {
                    row.push(AdjacencyEdit::RemoveElement { vertex: v, element: e });
                    if v != vt && n_common < 2 {
                        common[n_common] = v;
                        n_common += 1;
                    }
                }
            }
            unsafe { view.set_tri(e, [INVALID; 3]) };
        } else {
            unsafe { view.set_tri(e, t.map(|v| if v == vi { vt } else { v })) };
            row.push(AdjacencyEdit::AddElement { vertex: vt, element: e });
        }
    }
    for &vn in &adj.nn {
        if vn == vt {
            row.push(AdjacencyEdit::RemoveNeighbour {
                vertex: vt,
                neighbour: vi,
            });
        } else if common[..n_common].contains(&vn) {
            row.push(AdjacencyEdit::RemoveNeighbour {
                vertex: vn,
                neighbour: vi,
            });
        } else {
            row.push(AdjacencyEdit::ReplaceNeighbour {
                vertex: vn,
                old: vi,
                new: vt,
            });
            row.push(AdjacencyEdit::AddNeighbour {
                vertex: vt,
                neighbour: vn,
            });
        }
    }
    adj.nn.clear();
    adj.ne.clear();
}

/// Collapses `vi` onto `vt`, routing every edit to other vertices through
/// `buffer` row `worker`. Nothing is checked beyond adjacency.
pub fn coarsen_kernel(
    mesh: &mut Mesh,
    vi: VertexId,
    vt: VertexId,
    buffer: &DeferredOps<AdjacencyEdit>,
    worker: usize,
) -> Result<()> {
    if !mesh.is_vertex_live(vi) || !mesh.neighbours(vi).contains(&vt) {
        return Err(Error::InvalidArgument(format!("({vi}, {vt}) is not a mesh edge")));
    }
    let view = MeshView::new(mesh);
    let mut row = buffer.row(worker);
    kernel(&view, vi, vt, &mut row);
    Ok(())
}

/// Collapses short edges until no legal collapse of an edge shorter than
/// `l_min` remains.
pub fn coarsen_pass(
    mesh: &mut Mesh,
    field: &MetricField,
    l_min: f64,
    l_max: f64,
    workers: &Workers,
) -> Result<CoarsenStats> {
    if !(l_min > 0.0 && l_min < l_max) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < L_min < L_max (got {l_min} / {l_max})"
        )));
    }
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} metric tensors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    let n = mesh.n_vertices();
    let mut stats = CoarsenStats::default();
    let state: Vec<AtomicIsize> = (0..n)
        .map(|v| {
            AtomicIsize::new(if mesh.is_vertex_live(v) {
                REEVALUATE
            } else {
                CANNOT_COLLAPSE
            })
        })
        .collect();
    let t0 = Instant::now();
    let mut colours = colour_graph(mesh, workers);
    stats.colour_time += t0.elapsed();
    let mut buffer: DeferredOps<AdjacencyEdit> = DeferredOps::new(workers.count());

    for _ in 0..=n {
        let counts = {
            let m = &*mesh;
            let state = &state;
            workers.dynamic(
                n,
                CHUNK,
                |_| (0usize, 0usize),
                |(evals, active), v| {
                    let mut s = state[v].load(Ordering::Relaxed);
                    if s == REEVALUATE {
                        *evals += 1;
                        s = identify(m, field, v, l_min, l_max).map_or(CANNOT_COLLAPSE, |t| t as isize);
                        state[v].store(s, Ordering::Relaxed);
                    }
                    if s >= 0 {
                        *active += 1;
                    }
                },
            )
        };
        stats.identify_sweeps += 1;
        let active: usize = counts.iter().map(|c| c.1).sum();
        stats.evaluations += counts.iter().map(|c| c.0).sum::<usize>();
        if active == 0 {
            break;
        }
        stats.iterations += 1;

        for colour in 0..colours.n_colours() {
            let members: Vec<VertexId> = (0..n)
                .filter(|&v| state[v].load(Ordering::Relaxed) >= 0 && colours.colour(v) == colour)
                .collect();
            if members.is_empty() {
                continue;
            }
            let results = {
                let view = MeshView::new(mesh);
                let (view, state, members, buffer) = (&view, &state, &members, &buffer);
                let cursor = DynamicCursor::new(members.len(), 64);
                workers.run(|w| {
                    let mut row = buffer.row(w);
                    let mut dirty = Vec::new();
                    let (mut done, mut aborted) = (0, 0);
                    while let Some(chunk) = cursor.next_chunk() {
                        for &vi in &members[chunk] {
                            let vt = state[vi].load(Ordering::Relaxed) as usize;
                            // nn(vt) may lag edits of this class; a duplicated new edge
                            // would have to cross the interiors of two disjoint patches,
                            // which the area check already excludes.
                            if !collapse_legal(view, field, vi, vt, l_max) {
                                state[vi].store(REEVALUATE, Ordering::Relaxed);
                                aborted += 1;
                                continue;
                            }
                            for &vn in view.nn(vi) {
                                state[vn].store(REEVALUATE, Ordering::Relaxed);
                                dirty.push(vn);
                            }
                            kernel(view, vi, vt, &mut row);
                            state[vi].store(CANNOT_COLLAPSE, Ordering::Relaxed);
                            done += 1;
                        }
                    }
                    (dirty, done, aborted)
                })
            };
            let mut dirty = Vec::new();
            for (d, done, aborted) in results {
                dirty.extend(d);
                stats.collapses += done;
                stats.aborted += aborted;
            }
            let t0 = Instant::now();
            stats.commit += buffer.commit(workers, &mut mesh.adjacency, |_, adj, edit| edit.apply(adj));
            stats.commit_time += t0.elapsed();
            let t0 = Instant::now();
            repair_colouring(mesh, &mut colours, &dirty, workers);
            stats.colour_time += t0.elapsed();
        }
    }
    Ok(stats)
}
