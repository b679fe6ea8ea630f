//! Distance-1 vertex colouring: speculative parallel first-fit, parallel
//! conflict detection, serial conflict resolution.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::mesh::{Mesh, VertexId};
use crate::parallel::Workers;

const UNCOLOURED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColourMap {
    colour: Vec<u32>,
    n_colours: usize,
}

impl ColourMap {
    pub fn colour(&self, v: VertexId) -> usize {
        self.colour[v] as usize
    }

    pub fn colours(&self) -> &[u32] {
        &self.colour
    }

    pub fn n_colours(&self) -> usize {
        self.n_colours
    }

    pub fn len(&self) -> usize {
        self.colour.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colour.is_empty()
    }

    /// Builds a map from explicit colours (mostly for tests).
    pub fn from_colours(colour: Vec<u32>) -> Self {
        let n_colours = colour.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        ColourMap { colour, n_colours }
    }

    fn refresh_count(&mut self, mesh: &Mesh) {
        self.n_colours = mesh
            .live_vertices()
            .map(|v| self.colour[v] as usize + 1)
            .max()
            .unwrap_or(0);
    }
}

/// Smallest colour not used by any neighbour as currently read.
fn first_fit(nbr_colours: impl Iterator<Item = u32>) -> u32 {
    let mut mask = 0u64;
    let mut overflow: Vec<u32> = Vec::new();
    for c in nbr_colours {
        if c < 64 {
            mask |= 1 << c;
        } else if c != UNCOLOURED {
            overflow.push(c);
        }
    }
    if mask != u64::MAX {
        return (!mask).trailing_zeros();
    }
    overflow.sort_unstable();
    let mut c = 64;
    for o in overflow {
        if o == c {
            c += 1;
        } else if o > c {
            break;
        }
    }
    c
}

pub fn colour_graph(mesh: &Mesh, workers: &Workers) -> ColourMap {
    let n = mesh.n_vertices();
    let colour: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(UNCOLOURED)).collect();

    // (a) speculative first-fit; neighbour reads may be stale.
    workers.dynamic(
        n,
        512,
        |_| (),
        |_, v| {
            if mesh.adjacency[v].nn.is_empty() {
                colour[v].store(0, Ordering::Relaxed);
                return;
            }
            let c = first_fit(mesh.neighbours(v).iter().map(|&u| colour[u].load(Ordering::Relaxed)));
            colour[v].store(c, Ordering::Relaxed);
        },
    );

    let mut map = ColourMap {
        colour: colour.into_iter().map(AtomicU32::into_inner).collect(),
        n_colours: 0,
    };
    // (b) + (c)
    let conflicts = detect_conflicts(mesh, &map, 0..n, workers);
    resolve(mesh, &mut map, conflicts);
    map.refresh_count(mesh);
    map
}

/// Re-establishes a proper colouring after topology changes at `dirty`.
/// Only vertices in `dirty` or adjacent to it may change colour; vertices
/// not yet in the map (new mesh vertices) are coloured as well.
pub fn repair_colouring(mesh: &Mesh, map: &mut ColourMap, dirty: &[VertexId], workers: &Workers) {
    let old_len = map.colour.len();
    let mut dirty = dirty.to_vec();
    if mesh.n_vertices() > old_len {
        map.colour.resize(mesh.n_vertices(), UNCOLOURED);
        dirty.extend(old_len..mesh.n_vertices());
    }
    if dirty.is_empty() {
        return;
    }
    let mut closure = Vec::with_capacity(dirty.len() * 7);
    for &v in &dirty {
        if v < mesh.n_vertices() {
            closure.push(v);
            closure.extend_from_slice(mesh.neighbours(v));
        }
    }
    closure.sort_unstable();
    closure.dedup();
    let conflicts = detect_conflicts(mesh, map, closure.iter().copied(), workers);
    resolve(mesh, map, conflicts);
    map.refresh_count(mesh);
}

/// For every same-coloured edge the higher id is reported; uncoloured live
/// vertices are always reported.
fn detect_conflicts(
    mesh: &Mesh,
    map: &ColourMap,
    candidates: impl Iterator<Item = VertexId>,
    workers: &Workers,
) -> Vec<VertexId> {
    let candidates: Vec<VertexId> = candidates.collect();
    let found = workers.dynamic(
        candidates.len(),
        512,
        |_| Vec::new(),
        |out: &mut Vec<VertexId>, i| {
            let v = candidates[i];
            let cv = map.colour[v];
            let nbrs = mesh.neighbours(v);
            if cv == UNCOLOURED {
                if !nbrs.is_empty() {
                    out.push(v);
                }
                return;
            }
            for &u in nbrs {
                if map.colour[u] == cv {
                    out.push(u.max(v));
                }
            }
        },
    );
    let mut conflicts: Vec<VertexId> = found.into_iter().flatten().collect();
    conflicts.sort_unstable();
    conflicts.dedup();
    conflicts
}

fn resolve(mesh: &Mesh, map: &mut ColourMap, conflicts: Vec<VertexId>) {
    for v in conflicts {
        let c = first_fit(mesh.neighbours(v).iter().map(|&u| map.colour[u]));
        map.colour[v] = c;
    }
    for v in 0..mesh.n_vertices() {
        if map.colour[v] == UNCOLOURED {
            map.colour[v] = 0;
        }
    }
}

/// Members of `active` with the given colour.
pub fn independent_set(map: &ColourMap, active: &[VertexId], colour: usize) -> Vec<VertexId> {
    active
        .iter()
        .copied()
        .filter(|&v| v < map.colour.len() && map.colour[v] as usize == colour)
        .collect()
}

/// Number of live edges whose endpoints share a colour.
pub fn improper_edges(mesh: &Mesh, map: &ColourMap) -> usize {
    mesh.edges()
        .filter(|&(a, b)| a >= map.colour.len() || b >= map.colour.len() || map.colour[a] == map.colour[b])
        .count()
}
