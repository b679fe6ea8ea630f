//! Unstructured triangle mesh: element-node list, coordinates and the two
//! vertex-centred adjacency lists (node-node and node-element).

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type ElementId = usize;

/// Marks a deleted element when stored as its first vertex id.
pub const INVALID: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundaryTag {
    Interior,
    Boundary,
    Corner,
}

impl BoundaryTag {
    pub fn is_boundary(self) -> bool {
        !matches!(self, BoundaryTag::Interior)
    }
}

/// Adjacency of a single vertex. Both lists have set semantics; their order
/// carries no meaning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexAdjacency {
    pub nn: Vec<VertexId>,
    pub ne: Vec<ElementId>,
}

impl VertexAdjacency {
    pub fn is_detached(&self) -> bool {
        self.nn.is_empty() && self.ne.is_empty()
    }

    pub(crate) fn add_neighbour(&mut self, v: VertexId) {
        if !self.nn.contains(&v) {
            self.nn.push(v);
        }
    }

    pub(crate) fn remove_neighbour(&mut self, v: VertexId) -> bool {
        match self.nn.iter().position(|&x| x == v) {
            Some(pos) => {
                self.nn.swap_remove(pos);
                true
            }
            None => false,
        }
    }

    pub(crate) fn replace_neighbour(&mut self, old: VertexId, new: VertexId) {
        let has_new = self.nn.contains(&new);
        match self.nn.iter().position(|&x| x == old) {
            Some(pos) if has_new => {
                self.nn.swap_remove(pos);
            }
            Some(pos) => self.nn[pos] = new,
            None if !has_new => self.nn.push(new),
            None => {}
        }
    }

    pub(crate) fn add_element(&mut self, e: ElementId) {
        if !self.ne.contains(&e) {
            self.ne.push(e);
        }
    }

    pub(crate) fn remove_element(&mut self, e: ElementId) -> bool {
        match self.ne.iter().position(|&x| x == e) {
            Some(pos) => {
                self.ne.swap_remove(pos);
                true
            }
            None => false,
        }
    }
}

/// Twice-halved cross product: positive for counter-clockwise `a, b, c`.
#[inline]
pub fn triangle_signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub(crate) elements: Vec<[VertexId; 3]>,
    pub(crate) coords: Vec<[f64; 2]>,
    pub(crate) adjacency: Vec<VertexAdjacency>,
    pub(crate) boundary: Vec<BoundaryTag>,
    pub(crate) tracks_boundary: bool,
}

impl Mesh {
    /// Builds adjacency for a triangle soup, fixing clockwise elements.
    ///
    /// Elements whose first id is [`INVALID`] are carried along as deleted
    /// slots; vertices referenced by no live element end up detached.
    pub fn build_adjacency(elements: Vec<[VertexId; 3]>, coords: Vec<[f64; 2]>, detect_boundary: bool) -> Result<Mesh> {
        let n_vertices = coords.len();
        let mut elements = elements;
        for (eid, tri) in elements.iter_mut().enumerate() {
            if tri[0] == INVALID {
                continue;
            }
            for &v in tri.iter() {
                if v >= n_vertices {
                    return Err(Error::Structural {
                        element: eid,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Degenerate(eid));
            }
            let (a, b, c) = (coords[tri[0]], coords[tri[1]], coords[tri[2]]);
            let area = triangle_signed_area(a, b, c);
            let scale = [dist2(a, b), dist2(b, c), dist2(c, a)].into_iter().fold(0.0, f64::max);
            if area.abs() <= f64::EPSILON * scale {
                return Err(Error::Degenerate(eid));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let edge_counts = edge_counts(&elements);
        if let Some((&(a, b), _)) = edge_counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::NonManifold(a, b));
        }

        let adjacency = build_lists(&elements, n_vertices);
        let mut mesh = Mesh {
            boundary: vec![BoundaryTag::Interior; n_vertices],
            elements,
            coords,
            adjacency,
            tracks_boundary: detect_boundary,
        };
        if detect_boundary {
            mesh.boundary = derive_boundary_tags(&mesh.coords, &edge_counts);
        }
        Ok(mesh)
    }

    /// Assembles a mesh without any validation. Vertex ids out of range are
    /// left out of the adjacency lists but kept in the element list, so
    /// [`Mesh::verify`] can report them.
    pub fn assemble_unchecked(elements: Vec<[VertexId; 3]>, coords: Vec<[f64; 2]>) -> Mesh {
        let n_vertices = coords.len();
        let mut adjacency = vec![VertexAdjacency::default(); n_vertices];
        for (eid, tri) in elements.iter().enumerate() {
            if tri[0] == INVALID {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a < n_vertices {
                    adjacency[a].add_element(eid);
                    if b < n_vertices && a != b {
                        adjacency[a].add_neighbour(b);
                        adjacency[b].add_neighbour(a);
                    }
                }
            }
        }
        let counts = edge_counts(&elements);
        let boundary = derive_boundary_tags(&coords, &counts);
        Mesh {
            elements,
            coords,
            adjacency,
            boundary,
            tracks_boundary: true,
        }
    }

    /// Uniform `nx` by `ny` lattice over the unit square, every cell split
    /// along its lower-left to upper-right diagonal.
    pub fn structured(nx: usize, ny: usize) -> Result<Mesh> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "structured mesh needs nx, ny >= 2 (got {nx} x {ny})"
            )));
        }
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push([i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64]);
            }
        }
        let mut elements = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let v00 = j * nx + i;
                let v10 = v00 + 1;
                let v01 = v00 + nx;
                let v11 = v01 + 1;
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        Mesh::build_adjacency(elements, coords, true)
    }

    /// Number of vertex slots, including detached ones.
    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    /// Number of element slots, including deleted ones.
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_live_vertices(&self) -> usize {
        self.adjacency.iter().filter(|a| !a.is_detached()).count()
    }

    pub fn n_live_elements(&self) -> usize {
        self.elements.iter().filter(|t| t[0] != INVALID).count()
    }

    pub fn is_element_live(&self, eid: ElementId) -> bool {
        eid < self.elements.len() && self.elements[eid][0] != INVALID
    }

    pub fn is_vertex_live(&self, v: VertexId) -> bool {
        v < self.adjacency.len() && !self.adjacency[v].is_detached()
    }

    /// Vertex triple of a live element.
    pub fn element(&self, eid: ElementId) -> Option<[VertexId; 3]> {
        self.elements.get(eid).copied().filter(|t| t[0] != INVALID)
    }

    /// Raw element-node list, deleted slots included.
    pub fn element_nodes(&self) -> &[[VertexId; 3]] {
        &self.elements
    }

    pub fn live_elements(&self) -> impl Iterator<Item = (ElementId, [VertexId; 3])> + '_ {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, t)| t[0] != INVALID)
            .map(|(e, t)| (e, *t))
    }

    pub fn live_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.n_vertices()).filter(|&v| !self.adjacency[v].is_detached())
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn coord(&self, v: VertexId) -> [f64; 2] {
        self.coords[v]
    }

    pub fn neighbours(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v].nn
    }

    pub fn incident_elements(&self, v: VertexId) -> &[ElementId] {
        &self.adjacency[v].ne
    }

    pub fn adjacency(&self) -> &[VertexAdjacency] {
        &self.adjacency
    }

    pub fn boundary_tag(&self, v: VertexId) -> BoundaryTag {
        self.boundary[v]
    }

    pub fn boundary_tags(&self) -> &[BoundaryTag] {
        &self.boundary
    }

    /// Elements containing edge `(a, b)`, found through `a`'s element list.
    pub fn edge_elements(&self, a: VertexId, b: VertexId) -> impl Iterator<Item = ElementId> + '_ {
        self.adjacency[a]
            .ne
            .iter()
            .copied()
            .filter(move |&e| self.elements[e].contains(&b))
    }

    /// Every undirected edge once, as `(lo, hi)`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(v, adj)| adj.nn.iter().filter(move |&&w| w > v).map(move |&w| (v, w)))
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(|a| a.nn.len()).sum::<usize>() / 2
    }

    pub fn signed_area(&self, eid: ElementId) -> Result<f64> {
        let [a, b, c] = self.element(eid).ok_or(Error::InvalidElement(eid))?;
        Ok(triangle_signed_area(self.coords[a], self.coords[b], self.coords[c]))
    }

    pub fn total_area(&self) -> f64 {
        self.live_elements()
            .map(|(_, [a, b, c])| triangle_signed_area(self.coords[a], self.coords[b], self.coords[c]))
            .sum()
    }

    /// Moves a vertex. Only the coordinate changes; topology is untouched.
    pub fn set_coord(&mut self, v: VertexId, xy: [f64; 2]) {
        self.coords[v] = xy;
    }

    /// Checks every structural invariant without mutating anything.
    pub fn verify(&self) -> ConsistencyReport {
        let n_vertices = self.n_vertices();
        let mut violations = Vec::new();
        let mut edges: HashMap<(VertexId, VertexId), u32> = HashMap::new();

        for (eid, tri) in self.elements.iter().enumerate() {
            if tri[0] == INVALID {
                continue;
            }
            if let Some(&v) = tri.iter().find(|&&v| v >= n_vertices) {
                violations.push(Violation::VertexOutOfRange {
                    element: eid,
                    vertex: v,
                });
                continue;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                violations.push(Violation::RepeatedVertex { element: eid });
                continue;
            }
            let area = triangle_signed_area(self.coords[tri[0]], self.coords[tri[1]], self.coords[tri[2]]);
            if !(area > 0.0) {
                violations.push(Violation::NonPositiveArea { element: eid, area });
            }
            for k in 0..3 {
                let v = tri[k];
                if !self.adjacency[v].ne.contains(&eid) {
                    violations.push(Violation::MissingIncidence {
                        vertex: v,
                        element: eid,
                    });
                }
                let w = tri[(k + 1) % 3];
                *edges.entry((v.min(w), v.max(w))).or_default() += 1;
            }
        }

        for (v, adj) in self.adjacency.iter().enumerate() {
            for (i, &e) in adj.ne.iter().enumerate() {
                if adj.ne[..i].contains(&e) {
                    violations.push(Violation::DuplicateEntry { vertex: v, id: e });
                } else if e >= self.elements.len() || !self.elements[e].contains(&v) || self.elements[e][0] == INVALID {
                    violations.push(Violation::SpuriousIncidence { vertex: v, element: e });
                }
            }
            for (i, &w) in adj.nn.iter().enumerate() {
                if adj.nn[..i].contains(&w) {
                    violations.push(Violation::DuplicateEntry { vertex: v, id: w });
                    continue;
                }
                if w >= n_vertices {
                    violations.push(Violation::SpuriousNeighbour { a: v, b: w });
                    continue;
                }
                if !self.adjacency[w].nn.contains(&v) {
                    violations.push(Violation::AsymmetricAdjacency { a: v, b: w });
                }
                if v < w && !edges.contains_key(&(v, w)) {
                    violations.push(Violation::SpuriousNeighbour { a: v, b: w });
                }
            }
        }

        let mut sorted_edges: Vec<_> = edges.into_iter().collect();
        sorted_edges.sort_unstable();
        for ((a, b), count) in sorted_edges {
            if count > 2 {
                violations.push(Violation::NonManifoldEdge { a, b, count });
            }
            if !self.adjacency[a].nn.contains(&b) && !self.adjacency[b].nn.contains(&a) {
                violations.push(Violation::MissingNeighbour { a, b });
            }
            if count == 1 && self.tracks_boundary {
                for v in [a, b] {
                    if !self.boundary[v].is_boundary() {
                        violations.push(Violation::BoundaryTagMismatch { vertex: v });
                    }
                }
            }
        }

        ConsistencyReport { violations }
    }

    /// Drops deleted elements and detached vertices, renumbering densely
    /// while keeping the relative order of survivors.
    pub fn compact(&mut self) -> Renumbering {
        let mut vertex_map = vec![INVALID; self.n_vertices()];
        let mut next = 0;
        for (v, adj) in self.adjacency.iter().enumerate() {
            if !adj.is_detached() {
                vertex_map[v] = next;
                next += 1;
            }
        }
        let mut coords = Vec::with_capacity(next);
        let mut boundary = Vec::with_capacity(next);
        for (v, &nv) in vertex_map.iter().enumerate() {
            if nv != INVALID {
                coords.push(self.coords[v]);
                boundary.push(self.boundary[v]);
            }
        }
        let mut element_map = vec![INVALID; self.n_elements()];
        let mut elements = Vec::with_capacity(self.n_elements());
        for (e, tri) in self.elements.iter().enumerate() {
            if tri[0] != INVALID {
                element_map[e] = elements.len();
                elements.push(tri.map(|v| vertex_map[v]));
            }
        }
        self.adjacency = build_lists(&elements, coords.len());
        self.elements = elements;
        self.coords = coords;
        self.boundary = boundary;
        Renumbering {
            vertices: vertex_map,
            elements: element_map,
        }
    }
}

/// Old-to-new id maps produced by [`Mesh::compact`]; removed ids map to
/// [`INVALID`].
#[derive(Debug, Clone, PartialEq)]
pub struct Renumbering {
    pub vertices: Vec<usize>,
    pub elements: Vec<usize>,
}

impl Renumbering {
    pub fn is_identity(&self) -> bool {
        self.vertices.iter().enumerate().all(|(i, &v)| i == v) && self.elements.iter().enumerate().all(|(i, &e)| i == e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    VertexOutOfRange { element: ElementId, vertex: VertexId },
    RepeatedVertex { element: ElementId },
    NonPositiveArea { element: ElementId, area: f64 },
    MissingIncidence { vertex: VertexId, element: ElementId },
    SpuriousIncidence { vertex: VertexId, element: ElementId },
    AsymmetricAdjacency { a: VertexId, b: VertexId },
    MissingNeighbour { a: VertexId, b: VertexId },
    SpuriousNeighbour { a: VertexId, b: VertexId },
    DuplicateEntry { vertex: VertexId, id: usize },
    NonManifoldEdge { a: VertexId, b: VertexId, count: u32 },
    BoundaryTagMismatch { vertex: VertexId },
}

impl Violation {
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            Violation::VertexOutOfRange { .. } | Violation::RepeatedVertex { .. }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(8) {
            write!(f, "; {v:?}")?;
        }
        if self.violations.len() > 8 {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn edge_counts(elements: &[[VertexId; 3]]) -> HashMap<(VertexId, VertexId), u32> {
    let mut counts = HashMap::with_capacity(elements.len() * 2);
    for tri in elements.iter().filter(|t| t[0] != INVALID) {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

fn build_lists(elements: &[[VertexId; 3]], n_vertices: usize) -> Vec<VertexAdjacency> {
    let mut adjacency = vec![VertexAdjacency::default(); n_vertices];
    for (eid, tri) in elements.iter().enumerate() {
        if tri[0] == INVALID {
            continue;
        }
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            adjacency[a].ne.push(eid);
            adjacency[a].nn.push(b);
            adjacency[b].nn.push(a);
        }
    }
    for adj in &mut adjacency {
        adj.nn.sort_unstable();
        adj.nn.dedup();
    }
    adjacency
}

/// A vertex is on the boundary iff it bounds an edge used by one element;
/// it is a corner when its boundary edges are not collinear.
fn derive_boundary_tags(coords: &[[f64; 2]], edge_counts: &HashMap<(VertexId, VertexId), u32>) -> Vec<BoundaryTag> {
    let mut boundary_nbrs: Vec<Vec<VertexId>> = vec![Vec::new(); coords.len()];
    for (&(a, b), &count) in edge_counts {
        if count == 1 && a < coords.len() && b < coords.len() {
            boundary_nbrs[a].push(b);
            boundary_nbrs[b].push(a);
        }
    }
    boundary_nbrs
        .iter()
        .enumerate()
        .map(|(v, nbrs)| match nbrs.len() {
            0 => BoundaryTag::Interior,
            2 => {
                let p = coords[v];
                let (a, b) = (coords[nbrs[0]], coords[nbrs[1]]);
                let u = [a[0] - p[0], a[1] - p[1]];
                let w = [b[0] - p[0], b[1] - p[1]];
                let cross = u[0] * w[1] - u[1] * w[0];
                let scale = (u[0] * u[0] + u[1] * u[1]).sqrt() * (w[0] * w[0] + w[1] * w[1]).sqrt();
                if cross.abs() <= 1e-10 * scale {
                    BoundaryTag::Boundary
                } else {
                    BoundaryTag::Corner
                }
            }
            _ => BoundaryTag::Corner,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh {
        Mesh::build_adjacency(
            vec![[0, 1, 2], [0, 2, 3]],
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            true,
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_adjacency() {
        let m = Mesh::build_adjacency(vec![[0, 1, 2]], vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], true).unwrap();
        for v in 0..3 {
            assert_eq!(m.neighbours(v).len(), 2);
            assert_eq!(m.incident_elements(v).len(), 1);
            assert_eq!(m.boundary_tag(v), BoundaryTag::Corner);
        }
    }

    #[test]
    fn two_triangles_share_edge() {
        let m = Mesh::build_adjacency(
            vec![[0, 1, 2], [1, 3, 2]],
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            true,
        )
        .unwrap();
        for v in [1, 2] {
            assert_eq!(m.neighbours(v).len(), 3);
            assert_eq!(m.incident_elements(v).len(), 2);
        }
        assert!(m.verify().is_empty());
    }

    #[test]
    fn structured_interior_stencil() {
        let m = Mesh::structured(5, 5).unwrap();
        // Interior lattice point (2, 2).
        let v = 2 * 5 + 2;
        assert_eq!(m.incident_elements(v).len(), 6);
        let mut nbrs = m.neighbours(v).to_vec();
        nbrs.sort();
        // left, right, down, up, down-left, up-right
        assert_eq!(nbrs, vec![6, 7, 11, 13, 17, 18]);
        assert_eq!(m.boundary_tag(v), BoundaryTag::Interior);
        assert_eq!(m.boundary_tag(0), BoundaryTag::Corner);
        assert_eq!(m.boundary_tag(2), BoundaryTag::Boundary);
        assert_eq!(m.boundary_tag(24), BoundaryTag::Corner);
    }

    #[test]
    fn clockwise_input_is_flipped() {
        let m = Mesh::build_adjacency(vec![[0, 2, 1]], vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], true).unwrap();
        assert!((m.signed_area(0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn build_errors() {
        let c = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -1.0]];
        assert!(matches!(
            Mesh::build_adjacency(vec![[0, 1, 7]], c.clone(), true),
            Err(Error::Structural { vertex: 7, .. })
        ));
        assert!(matches!(
            Mesh::build_adjacency(vec![[0, 1, 2], [1, 0, 4], [0, 1, 3]], c.clone(), true),
            Err(Error::NonManifold(0, 1))
        ));
        let collinear = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(
            Mesh::build_adjacency(vec![[0, 1, 2]], collinear, true),
            Err(Error::Degenerate(0))
        ));
    }

    #[test]
    fn signed_area_examples() {
        assert_eq!(triangle_signed_area([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]), 0.5);
        assert_eq!(triangle_signed_area([0.0, 1.0], [1.0, 0.0], [0.0, 0.0]), -0.5);
        assert_eq!(triangle_signed_area([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]), 0.0);
        let mut m = square();
        m.elements[1][0] = INVALID;
        assert!(matches!(m.signed_area(1), Err(Error::InvalidElement(1))));
    }

    #[test]
    fn structured_counts() {
        let m = Mesh::structured(2, 2).unwrap();
        assert_eq!((m.n_vertices(), m.n_elements()), (4, 2));
        let m = Mesh::structured(3, 3).unwrap();
        assert_eq!((m.n_vertices(), m.n_elements()), (9, 8));
        assert!(m.verify().is_empty());
        assert!(Mesh::structured(1, 4).is_err());
    }

    #[test]
    fn structured_benchmark_scale() {
        let m = Mesh::structured(201, 201).unwrap();
        assert_eq!((m.n_vertices(), m.n_elements()), (40401, 80000));
        assert!(m.verify().is_empty());
        assert!((m.total_area() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn verify_reports() {
        assert!(square().verify().is_empty());

        let m = Mesh::assemble_unchecked(vec![[0, 1, 2], [0, 2, 4]], square().coords.clone());
        let report = m.verify();
        assert_eq!(report.len(), 1, "{report}");
        assert!(report.violations[0].is_structural());

        let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]];
        let m = Mesh::assemble_unchecked(vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]], coords);
        let report = m.verify();
        assert_eq!(report.len(), 1, "{report}");
        assert!(matches!(
            report.violations[0],
            Violation::NonManifoldEdge { a: 0, b: 1, count: 3 }
        ));
    }

    #[test]
    fn verify_catches_asymmetry() {
        let mut m = square();
        m.adjacency[0].nn.retain(|&v| v != 1);
        let report = m.verify();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::AsymmetricAdjacency { a: 1, b: 0 })));
    }

    #[test]
    fn compact_without_deletions_is_identity() {
        let mut m = Mesh::structured(4, 3).unwrap();
        let before = m.clone();
        let map = m.compact();
        assert!(map.is_identity());
        assert_eq!(m.elements, before.elements);
        assert_eq!(m.coords, before.coords);
    }

    #[test]
    fn compact_drops_sentinels() {
        let mut m = Mesh::structured(3, 3).unwrap();
        // Deleting two corner-cell elements detaches nothing: every vertex
        // stays in some other element.
        m.elements[0][0] = INVALID;
        m.elements[7][0] = INVALID;
        let mut m = Mesh::build_adjacency(m.elements.clone(), m.coords.clone(), true).unwrap();
        m.compact();
        assert_eq!(m.n_elements(), 6);
        assert_eq!(m.n_vertices(), 9);
        assert!(m.verify().is_empty());
    }

    #[test]
    fn idempotent_rebuild() {
        let m = Mesh::structured(6, 4).unwrap();
        let again = Mesh::build_adjacency(m.elements.clone(), m.coords.clone(), true).unwrap();
        for v in 0..m.n_vertices() {
            let mut a = m.neighbours(v).to_vec();
            let mut b = again.neighbours(v).to_vec();
            a.sort();
            b.sort();
            assert_eq!(a, b);
            let mut a = m.incident_elements(v).to_vec();
            let mut b = again.incident_elements(v).to_vec();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        assert_eq!(m.boundary, again.boundary);
    }
}
