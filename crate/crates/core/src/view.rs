//! Read access shared by serial code and sweep kernels.

use crate::mesh::{BoundaryTag, ElementId, Mesh, VertexAdjacency, VertexId};
use crate::parallel::SharedSlice;

pub(crate) trait Topology {
    fn nn(&self, v: VertexId) -> &[VertexId];
    fn ne(&self, v: VertexId) -> &[ElementId];
    fn tri(&self, e: ElementId) -> [VertexId; 3];
    fn xy(&self, v: VertexId) -> [f64; 2];
    fn tag(&self, v: VertexId) -> BoundaryTag;
    fn tracks_boundary(&self) -> bool;
}

impl Topology for Mesh {
    fn nn(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v].nn
    }
    fn ne(&self, v: VertexId) -> &[ElementId] {
        &self.adjacency[v].ne
    }
    fn tri(&self, e: ElementId) -> [VertexId; 3] {
        self.elements[e]
    }
    fn xy(&self, v: VertexId) -> [f64; 2] {
        self.coords[v]
    }
    fn tag(&self, v: VertexId) -> BoundaryTag {
        self.boundary[v]
    }
    fn tracks_boundary(&self) -> bool {
        self.tracks_boundary
    }
}

/// Mutable view of a mesh handed to the workers of one independent-set
/// sweep. Kernels may write only the vertices and elements they own and
/// may read only state no other kernel of the sweep writes; the
/// independent set guarantees both.
pub(crate) struct MeshView<'a> {
    elements: SharedSlice<'a, [VertexId; 3]>,
    adjacency: SharedSlice<'a, VertexAdjacency>,
    coords: SharedSlice<'a, [f64; 2]>,
    boundary: &'a [BoundaryTag],
    tracks_boundary: bool,
}

impl<'a> MeshView<'a> {
    pub(crate) fn new(mesh: &'a mut Mesh) -> Self {
        let Mesh {
            elements,
            coords,
            adjacency,
            boundary,
            tracks_boundary,
        } = mesh;
        MeshView {
            elements: SharedSlice::new(elements),
            adjacency: SharedSlice::new(adjacency),
            coords: SharedSlice::new(coords),
            boundary,
            tracks_boundary: *tracks_boundary,
        }
    }

    /// # Safety
    /// `v` must be owned by the calling kernel.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn adjacency_mut(&self, v: VertexId) -> &mut VertexAdjacency {
        self.adjacency.get_mut(v)
    }

    /// # Safety
    /// `e` must be owned by the calling kernel.
    pub(crate) unsafe fn set_tri(&self, e: ElementId, t: [VertexId; 3]) {
        *self.elements.get_mut(e) = t;
    }

    /// # Safety
    /// `v` must be owned by the calling kernel.
    pub(crate) unsafe fn set_xy(&self, v: VertexId, xy: [f64; 2]) {
        *self.coords.get_mut(v) = xy;
    }
}

// SAFETY (all methods): sweep kernels only read vertices and elements that
// no concurrent kernel writes, per the independent-set contract above.
impl Topology for MeshView<'_> {
    fn nn(&self, v: VertexId) -> &[VertexId] {
        unsafe { &self.adjacency.get(v).nn }
    }
    fn ne(&self, v: VertexId) -> &[ElementId] {
        unsafe { &self.adjacency.get(v).ne }
    }
    fn tri(&self, e: ElementId) -> [VertexId; 3] {
        unsafe { *self.elements.get(e) }
    }
    fn xy(&self, v: VertexId) -> [f64; 2] {
        unsafe { *self.coords.get(v) }
    }
    fn tag(&self, v: VertexId) -> BoundaryTag {
        self.boundary[v]
    }
    fn tracks_boundary(&self) -> bool {
        self.tracks_boundary
    }
}
