//! Quality-driven edge flipping with mark propagation.
//!
//! An edge `(vi, vj)` is marked at its lower-id endpoint. Active vertices
//! (at least one marked edge) are processed one colour class at a time;
//! each class is traversed up to three times before the deferred edits
//! are committed.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crate::colouring::{colour_graph, repair_colouring};
use crate::error::{Error, Result};
use crate::mesh::{triangle_signed_area, Mesh, VertexId};
use crate::metric::MetricField;
use crate::parallel::{
    AdjacencyEdit, CommitStats, DeferRow, DeferredOps, DynamicCursor, SharedSlice, Targeted, Workers,
};
use crate::quality::triangle_quality;
use crate::view::{MeshView, Topology};

/// A flip must raise the local minimum by more than this.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;
const TRAVERSALS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MarkEdit {
    vertex: VertexId,
    other: VertexId,
}

impl Targeted for MarkEdit {
    fn target(&self) -> usize {
        self.vertex
    }
}

#[derive(Debug, Clone, Default)]
pub struct SwapStats {
    pub flips: usize,
    pub rejected: usize,
    /// Edges left marked because a neighbouring flip was still uncommitted.
    pub stale_skips: usize,
    pub rounds: usize,
    /// Smallest `new_min - old_min` over accepted flips.
    pub min_gain: f64,
    /// Accepted flips that did not strictly improve their pair.
    pub monotonicity_violations: usize,
    /// Marks still pending when the safety cap stopped the pass.
    pub leftover_marks: usize,
    pub cap_hit: bool,
    pub commit: CommitStats,
    pub commit_time: Duration,
    pub colour_time: Duration,
}

enum Outcome {
    NotAnEdge,
    Boundary,
    Stale,
    Rejected,
    Flipped {
        old: f64,
        new: f64,
        a: VertexId,
        b: VertexId,
    },
}

fn quality_of<T: Topology>(m: &T, field: &MetricField, t: [VertexId; 3]) -> f64 {
    triangle_quality(t.map(|v| m.xy(v)), t.map(|v| field.get(v)))
}

/// The two elements on edge `(vi, vj)` as `((e0, a), (e1, b))` with
/// `e0 = (vi, vj, a)` and `e1 = (vj, vi, b)` counter-clockwise.
#[allow(clippy::collapsible_if)]
fn edge_pair<T: Topology>(m: &T, vi: VertexId, vj: VertexId) -> Option<((usize, VertexId), (usize, VertexId))> {
    let mut left = None;
    let mut right = None;
    for &e in m.ne(vi) {
        let t = m.tri(e);
        let Some(k) = t.iter().position(|&v| v == vi) else {
            continue;
        };
        if t[(k + 1) % 3] == vj {
            if left.replace((e, t[(k + 2) % 3])).is_some() {
                return None;
            }
        } else if t[(k + 2) % 3] == vj {
            if right.replace((e, t[(k + 1) % 3])).is_some() {
                return None;
            }
        }
    }
    Some((left?, right?))
}

fn evaluate<T: Topology>(
    m: &T,
    field: &MetricField,
    vi: VertexId,
    vj: VertexId,
    is_stale: impl Fn(VertexId) -> bool,
) -> (Outcome, Option<(usize, usize)>) {
    if !m.nn(vi).contains(&vj) {
        return (Outcome::NotAnEdge, None);
    }
    let Some(((e0, a), (e1, b))) = edge_pair(m, vi, vj) else {
        return (Outcome::Boundary, None);
    };
    if is_stale(a) || is_stale(b) {
        return (Outcome::Stale, None);
    }
    if m.nn(a).contains(&b) {
        return (Outcome::Rejected, None);
    }
    let [pi, pj, pa, pb] = [vi, vj, a, b].map(|v| m.xy(v));
    if !(triangle_signed_area(pi, pb, pa) > 0.0 && triangle_signed_area(pj, pa, pb) > 0.0) {
        return (Outcome::Rejected, None);
    }
    let old = quality_of(m, field, m.tri(e0)).min(quality_of(m, field, m.tri(e1)));
    let new = quality_of(m, field, [vi, b, a]).min(quality_of(m, field, [vj, a, b]));
    if new > old + IMPROVEMENT_TOLERANCE {
        (Outcome::Flipped { old, new, a, b }, Some((e0, e1)))
    } else {
        (Outcome::Rejected, None)
    }
}

/// Rewrites the pair in place. `vi`'s own lists change immediately; the
/// other three vertices get deferred edits.
fn apply_flip(
    view: &MeshView<'_>,
    (vi, vj, a, b): (VertexId, VertexId, VertexId, VertexId),
    (e0, e1): (usize, usize),
    row: &mut DeferRow<'_, AdjacencyEdit>,
) {
    // SAFETY: vi is in the current independent set; its patch, which holds
    // e0 and e1, belongs to this kernel alone.
    unsafe {
        view.set_tri(e0, [vi, b, a]);
        view.set_tri(e1, [vj, a, b]);
        let adj = view.adjacency_mut(vi);
        adj.remove_element(e1);
        adj.remove_neighbour(vj);
    }
    row.push(AdjacencyEdit::RemoveElement {
        vertex: vj,
        element: e0,
    });
    row.push(AdjacencyEdit::RemoveNeighbour {
        vertex: vj,
        neighbour: vi,
    });
    row.push(AdjacencyEdit::AddElement { vertex: a, element: e1 });
    row.push(AdjacencyEdit::AddNeighbour {
        vertex: a,
        neighbour: b,
    });
    row.push(AdjacencyEdit::AddElement { vertex: b, element: e0 });
    row.push(AdjacencyEdit::AddNeighbour {
        vertex: b,
        neighbour: a,
    });
}

/// Flips interior edge `(vi, vj)` if that strictly raises the minimum
/// quality of its two elements. Boundary edges are never flipped.
pub fn swap_edge(mesh: &mut Mesh, field: &MetricField, vi: VertexId, vj: VertexId) -> Result<bool> {
    if !mesh.is_vertex_live(vi) || !mesh.is_vertex_live(vj) || field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!("cannot swap ({vi}, {vj})")));
    }
    let (outcome, pair) = evaluate(mesh, field, vi, vj, |_| false);
    let Outcome::Flipped { a, b, .. } = outcome else {
        return Ok(false);
    };
    let mut buffer = DeferredOps::new(1);
    {
        let view = MeshView::new(mesh);
        let mut row = buffer.row(0);
        apply_flip(&view, (vi, vj, a, b), pair.unwrap(), &mut row);
    }
    buffer.commit(&Workers::serial(), &mut mesh.adjacency, |_, adj, edit| edit.apply(adj));
    Ok(true)
}

fn insert_mark(marks: &mut Vec<VertexId>, v: VertexId) {
    if !marks.contains(&v) {
        marks.push(v);
    }
}

/// Flips edges until no marked edge remains, starting with every edge
/// marked.
pub fn swap_pass(mesh: &mut Mesh, field: &MetricField, workers: &Workers) -> Result<SwapStats> {
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "{} metric tensors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    let n = mesh.n_vertices();
    let mut stats = SwapStats {
        min_gain: f64::INFINITY,
        ..SwapStats::default()
    };
    let mut marks: Vec<Vec<VertexId>> = (0..n)
        .map(|v| mesh.neighbours(v).iter().copied().filter(|&w| w > v).collect())
        .collect();
    let touched: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
    let mut sweep: u32 = 0;
    let cap = 100 * mesh.n_live_elements().max(1);
    let flips_total = AtomicUsize::new(0);

    let t0 = Instant::now();
    let mut colours = colour_graph(mesh, workers);
    stats.colour_time += t0.elapsed();
    let mut adjacency_edits: DeferredOps<AdjacencyEdit> = DeferredOps::new(workers.count());
    let mut mark_edits: DeferredOps<MarkEdit> = DeferredOps::new(workers.count());

    'rounds: loop {
        let active: Vec<VertexId> = (0..n).filter(|&v| !marks[v].is_empty()).collect();
        if active.is_empty() {
            break;
        }
        stats.rounds += 1;
        for colour in 0..colours.n_colours() {
            let members: Vec<VertexId> = active
                .iter()
                .copied()
                .filter(|&v| colours.colour(v) == colour)
                .collect();
            if members.is_empty() {
                continue;
            }
            sweep = sweep.wrapping_add(1).max(1);
            let mut dirty = Vec::new();
            for _ in 0..TRAVERSALS {
                let results = {
                    let view = MeshView::new(mesh);
                    let marks_view = SharedSlice::new(&mut marks);
                    let (view, marks_view, members) = (&view, &marks_view, &members);
                    let (touched, flips_total) = (&touched, &flips_total);
                    let (adjacency_edits, mark_edits) = (&adjacency_edits, &mark_edits);
                    let cursor = DynamicCursor::new(members.len(), 64);
                    workers.run(|w| {
                        let mut row = adjacency_edits.row(w);
                        let mut mark_row = mark_edits.row(w);
                        let mut local = LocalStats {
                            min_gain: f64::INFINITY,
                            ..LocalStats::default()
                        };
                        while let Some(chunk) = cursor.next_chunk() {
                            for &vi in &members[chunk] {
                                // SAFETY: vi's mark list is owned by this kernel.
                                let own = unsafe { marks_view.get_mut(vi) };
                                let pending = std::mem::take(own);
                                for vj in pending {
                                    if flips_total.load(Ordering::Relaxed) >= cap {
                                        insert_mark(own, vj);
                                        continue;
                                    }
                                    let stale = |v: VertexId| touched[v].load(Ordering::Relaxed) == sweep;
                                    let (outcome, pair) = evaluate(view, field, vi, vj, stale);
                                    match outcome {
                                        Outcome::NotAnEdge | Outcome::Boundary => {}
                                        Outcome::Stale => {
                                            local.stale += 1;
                                            insert_mark(own, vj);
                                        }
                                        Outcome::Rejected => local.rejected += 1,
                                        Outcome::Flipped { old, new, a, b } => {
                                            apply_flip(view, (vi, vj, a, b), pair.unwrap(), &mut row);
                                            for v in [vj, a, b] {
                                                touched[v].store(sweep, Ordering::Relaxed);
                                            }
                                            for (p, q) in [(vi, b), (b, vj), (vj, a), (a, vi)] {
                                                let (lo, hi) = (p.min(q), p.max(q));
                                                if lo == vi {
                                                    insert_mark(own, hi);
                                                } else {
                                                    mark_row.push(MarkEdit { vertex: lo, other: hi });
                                                }
                                            }
                                            local.dirty.extend_from_slice(&[vi, vj, a, b]);
                                            local.flips += 1;
                                            local.min_gain = local.min_gain.min(new - old);
                                            if !(new > old) {
                                                local.violations += 1;
                                            }
                                            flips_total.fetch_add(1, Ordering::Relaxed);
                                        }
                                    }
                                }
                            }
                        }
                        local
                    })
                };
                let mut flipped = 0;
                for local in results {
                    flipped += local.flips;
                    stats.flips += local.flips;
                    stats.rejected += local.rejected;
                    stats.stale_skips += local.stale;
                    stats.monotonicity_violations += local.violations;
                    stats.min_gain = stats.min_gain.min(local.min_gain);
                    dirty.extend(local.dirty);
                }
                if flipped == 0 {
                    break;
                }
            }
            let t0 = Instant::now();
            stats.commit += adjacency_edits.commit(workers, &mut mesh.adjacency, |_, adj, edit| edit.apply(adj));
            stats.commit += mark_edits.commit(workers, &mut marks, |_, list, edit| {
                insert_mark(list, edit.other);
                true
            });
            stats.commit_time += t0.elapsed();
            if !dirty.is_empty() {
                let t0 = Instant::now();
                repair_colouring(mesh, &mut colours, &dirty, workers);
                stats.colour_time += t0.elapsed();
            }
            if flips_total.load(Ordering::Relaxed) >= cap {
                stats.cap_hit = true;
                break 'rounds;
            }
        }
    }
    stats.leftover_marks = marks.iter().map(Vec::len).sum();
    if stats.flips == 0 {
        stats.min_gain = 0.0;
    }
    Ok(stats)
}

#[derive(Default)]
struct LocalStats {
    flips: usize,
    rejected: usize,
    stale: usize,
    violations: usize,
    min_gain: f64,
    dirty: Vec<VertexId>,
}
