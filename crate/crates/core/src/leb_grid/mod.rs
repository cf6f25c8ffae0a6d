//! Conforming tetrahedral subdivision of the unit cube by longest-edge bisection.
//!
//! The grid is a binary forest rooted at 24 tetrahedra, one per halfedge of
//! the control cube. Every tetrahedron stores an ordered vertex quadruple; the
//! ordering together with the level selects the refinement edge and the
//! vertex orderings of the two children (Maubach's reflection scheme). The
//! roots are ordered `(edge start, edge end, face center, cube center)`, which
//! makes them the level-2 members of a Kuhn-cube refinement, so the level
//! used for the edge rule is shifted by two (see [`refinement_index`]).
//!
//! Vertex coordinates are 24-bit fixed point. Every midpoint is exact, vertex
//! welding is exact, and conformity can be checked bit for bit.

mod normals;
mod query;
mod validate;

use std::collections::HashMap;

use glam::DVec3;
use thiserror::Error;

pub use normals::{face_normal_id, FaceNormalId, FACE_DIRECTIONS, FACE_NORMALS};
pub use query::Segment;
pub use validate::{ValidationReport, Violation};

use crate::builder::MediaPayload;

/// log2 of the fixed-point denominator.
pub const FIXED_BITS: u32 = 24;
/// Fixed-point representation of the coordinate 1.0.
pub const FIXED_ONE: u32 = 1 << FIXED_BITS;
/// Refinement cap; keeps every midpoint on the integer lattice.
pub const DEFAULT_MAX_LEVEL: u8 = 48;
pub const ROOT_COUNT: usize = 24;

/// `6 * volume` of the unit cube in fixed-point units.
pub(crate) const CUBE_DET: i128 = 6 * (1i128 << (3 * FIXED_BITS));

/// Vertex slots of face `i` (the face opposite vertex `i`).
pub const FACE_VERTS: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Vertex index pairs of the six edges of a tetrahedron.
pub const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TetId(pub u32);

impl TetId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A vertex in fixed-point unit-cube coordinates (`k` stands for `k / 2^24`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub pos: [u32; 3],
}

impl Vertex {
    pub const fn new(x: u32, y: u32, z: u32) -> Self {
        Self { pos: [x, y, z] }
    }

    #[inline]
    pub fn to_dvec3(self) -> DVec3 {
        let s = 1.0 / FIXED_ONE as f64;
        DVec3::new(
            self.pos[0] as f64 * s,
            self.pos[1] as f64 * s,
            self.pos[2] as f64 * s,
        )
    }

    /// Exact midpoint, or `None` when a coordinate sum is odd.
    pub fn midpoint(self, other: Vertex) -> Option<Vertex> {
        let mut out = [0u32; 3];
        for i in 0..3 {
            let s = self.pos[i] as u64 + other.pos[i] as u64;
            if s % 2 != 0 {
                return None;
            }
            out[i] = (s / 2) as u32;
        }
        Some(Vertex { pos: out })
    }

    pub fn squared_distance(self, other: Vertex) -> u64 {
        (0..3)
            .map(|i| {
                let d = self.pos[i] as i64 - other.pos[i] as i64;
                (d * d) as u64
            })
            .sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("tet {tet:?} is at the refinement cap (level {level})")]
    MaxLevelExceeded { tet: TetId, level: u8 },
    #[error("tet {0:?} is not a leaf")]
    NotALeaf(TetId),
    #[error("tet {0:?} does not exist")]
    UnknownTet(TetId),
    #[error("face normal {normal:?} matches no canonical direction")]
    NotCanonical { normal: [i64; 3] },
    #[error("point {0} lies outside the unit cube")]
    OutsideGrid(DVec3),
    #[error("midpoint of {0:?} and {1:?} is not on the fixed-point lattice")]
    OddMidpoint(Vertex, Vertex),
    #[error("inconsistent grid: {0}")]
    Corrupt(String),
}

/// One node of the bisection forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tet {
    pub verts: [VertexId; 4],
    pub level: u8,
    pub parent: Option<TetId>,
    pub children: Option<[TetId; 2]>,
    /// Slot `i` is the leaf across the face opposite `verts[i]`; leaves only.
    pub neighbors: [Option<TetId>; 4],
    pub payload: Option<MediaPayload>,
    /// Slot `i` is the outward normal of the face opposite `verts[i]`.
    pub normals: [FaceNormalId; 4],
}

impl Tet {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Sorted vertex ids of face `i`.
    pub fn face_key(&self, i: usize) -> FaceKey {
        let [a, b, c] = FACE_VERTS[i].map(|s| self.verts[s]);
        FaceKey::new(a, b, c)
    }

    /// Slot of the vertex not contained in `key`.
    pub fn face_index_of(&self, key: &FaceKey) -> Option<usize> {
        (0..4).find(|&i| self.face_key(i) == *key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey(pub VertexId, pub VertexId);

impl EdgeKey {
    pub fn new(a: VertexId, b: VertexId) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaceKey(pub [VertexId; 3]);

impl FaceKey {
    pub fn new(a: VertexId, b: VertexId, c: VertexId) -> Self {
        let mut k = [a, b, c];
        k.sort_unstable();
        Self(k)
    }
}

/// Geometry of a tetrahedron for voxel gathering, in fixed point.
///
/// `open_faces[i]` excludes points lying exactly on face `i` from the closed
/// point-in-tet test; used so that a parent's points split cleanly between
/// its two children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetGeometry {
    pub verts: [Vertex; 4],
    pub open_faces: [bool; 4],
}

impl TetGeometry {
    pub fn closed(verts: [Vertex; 4]) -> Self {
        Self { verts, open_faces: [false; 4] }
    }

    pub fn centroid(&self) -> DVec3 {
        self.verts.iter().map(|v| v.to_dvec3()).sum::<DVec3>() * 0.25
    }

    pub fn longest_edge(&self) -> f64 {
        TET_EDGES
            .iter()
            .map(|[a, b]| self.verts[*a].squared_distance(self.verts[*b]))
            .max()
            .map(|d2| (d2 as f64).sqrt() / FIXED_ONE as f64)
            .unwrap_or(0.0)
    }
}

/// Position in the vertex quadruple of the second endpoint of the refinement
/// edge. The first endpoint is always slot 0.
#[inline]
pub fn refinement_index(level: u8) -> usize {
    3 - ((level as usize + 2) % 3)
}

/// `6 * signed volume` of a tetrahedron, exact.
pub fn signed_det(v: [Vertex; 4]) -> i128 {
    let d = |i: usize, k: usize| v[i].pos[k] as i128 - v[0].pos[k] as i128;
    let (ax, ay, az) = (d(1, 0), d(1, 1), d(1, 2));
    let (bx, by, bz) = (d(2, 0), d(2, 1), d(2, 2));
    let (cx, cy, cz) = (d(3, 0), d(3, 1), d(3, 2));
    ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
}

/// Bisection forest over the unit cube.
#[derive(Debug, Clone)]
pub struct TetGrid {
    vertices: Vec<Vertex>,
    vertex_lookup: HashMap<Vertex, VertexId>,
    tets: Vec<Tet>,
    roots: [TetId; ROOT_COUNT],
    edge_map: HashMap<EdgeKey, Vec<TetId>>,
    face_map: HashMap<FaceKey, [Option<TetId>; 2]>,
    max_level: u8,
    leaf_count: usize,
}

impl TetGrid {
    /// Tessellates the unit cube into 24 root tetrahedra, one per halfedge.
    pub fn init_roots() -> Self {
        Self::init_roots_with_max_level(DEFAULT_MAX_LEVEL)
    }

    pub fn init_roots_with_max_level(max_level: u8) -> Self {
        let max_level = max_level.min(DEFAULT_MAX_LEVEL);
        let mut grid = TetGrid {
            vertices: Vec::new(),
            vertex_lookup: HashMap::new(),
            tets: Vec::with_capacity(ROOT_COUNT),
            roots: [TetId(0); ROOT_COUNT],
            edge_map: HashMap::new(),
            face_map: HashMap::new(),
            max_level,
            leaf_count: 0,
        };
        let one = FIXED_ONE;
        let half = FIXED_ONE / 2;
        let center = grid.intern(Vertex::new(half, half, half));
        let mut n = 0;
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in 0..2u32 {
                // Corners counter-clockwise around +axis; reversed on the low side
                // so that every face walks its boundary counter-clockwise from outside.
                let mut corners = [(0, 0), (1, 0), (1, 1), (0, 1)];
                if side == 0 {
                    corners.reverse();
                }
                let point = |cu: u32, cv: u32| {
                    let mut p = [0u32; 3];
                    p[axis] = side * one;
                    p[u] = cu;
                    p[v] = cv;
                    Vertex { pos: p }
                };
                let face_center = grid.intern(point(half, half));
                for i in 0..4 {
                    let (au, av) = corners[i];
                    let (bu, bv) = corners[(i + 1) % 4];
                    let a = grid.intern(point(au * one, av * one));
                    let b = grid.intern(point(bu * one, bv * one));
                    let id = grid.push_tet([a, b, face_center, center], 0, None);
                    grid.roots[n] = id;
                    n += 1;
                }
            }
        }
        for i in 0..ROOT_COUNT {
            grid.link_leaf(grid.roots[i]);
        }
        grid
    }

    fn intern(&mut self, v: Vertex) -> VertexId {
        if let Some(&id) = self.vertex_lookup.get(&v) {
            return id;
        }
        let id = VertexId(self.vertices.len() as u32);
        self.vertices.push(v);
        self.vertex_lookup.insert(v, id);
        id
    }

    fn push_tet(&mut self, verts: [VertexId; 4], level: u8, parent: Option<TetId>) -> TetId {
        let pos = verts.map(|v| self.vertices[v.index()]);
        let normals = std::array::from_fn(|i| {
            let [a, b, c] = FACE_VERTS[i].map(|s| pos[s]);
            face_normal_id(a, b, c, pos[i])
                .expect("bisection produced a face outside the canonical orientation set")
        });
        let id = TetId(self.tets.len() as u32);
        self.tets.push(Tet {
            verts,
            level,
            parent,
            children: None,
            neighbors: [None; 4],
            payload: None,
            normals,
        });
        self.leaf_count += 1;
        id
    }

    // -- accessors ---------------------------------------------------------

    #[inline]
    pub fn tet(&self, id: TetId) -> &Tet {
        &self.tets[id.index()]
    }

    /// Raw mutable access. Mutating topology through this breaks invariants
    /// that [`validate`](Self::validate) will report.
    pub fn tet_mut(&mut self, id: TetId) -> &mut Tet {
        &mut self.tets[id.index()]
    }

    pub fn get(&self, id: TetId) -> Option<&Tet> {
        self.tets.get(id.index())
    }

    #[inline]
    pub fn vertex(&self, id: VertexId) -> Vertex {
        self.vertices[id.index()]
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn roots(&self) -> &[TetId; ROOT_COUNT] {
        &self.roots
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn leaves(&self) -> impl Iterator<Item = TetId> + '_ {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_leaf())
            .map(|(i, _)| TetId(i as u32))
    }

    /// Deepest leaf level.
    pub fn depth(&self) -> u8 {
        self.tets
            .iter()
            .filter(|t| t.is_leaf())
            .map(|t| t.level)
            .max()
            .unwrap_or(0)
    }

    pub fn positions(&self, id: TetId) -> [Vertex; 4] {
        self.tet(id).verts.map(|v| self.vertex(v))
    }

    pub fn geometry(&self, id: TetId) -> TetGeometry {
        TetGeometry::closed(self.positions(id))
    }

    /// Geometry of a child with the shared bisection face open on the second
    /// child, so that the two children partition the parent's closed point set.
    pub fn partition_geometry(&self, id: TetId) -> TetGeometry {
        let mut g = self.geometry(id);
        let tet = self.tet(id);
        if let Some(parent) = tet.parent {
            let p = self.tet(parent);
            if let Some([_, second]) = p.children {
                if second == id {
                    g.open_faces[refinement_index(p.level) - 1] = true;
                }
            }
        }
        g
    }

    /// Leaves currently containing the edge `(a, b)`.
    pub fn edge_leaves(&self, a: VertexId, b: VertexId) -> &[TetId] {
        self.edge_map
            .get(&EdgeKey::new(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub(crate) fn edge_map(&self) -> &HashMap<EdgeKey, Vec<TetId>> {
        &self.edge_map
    }

    pub fn volume(&self, id: TetId) -> f64 {
        signed_det(self.positions(id)).abs() as f64 / CUBE_DET as f64
    }

    /// Outward plane of face `i`: unit normal from the table and offset `n . x`.
    #[inline]
    pub fn face_plane(&self, id: TetId, face: usize) -> (DVec3, f64) {
        let tet = self.tet(id);
        let n = tet.normals[face].normal();
        let p = self.vertex(tet.verts[FACE_VERTS[face][0]]).to_dvec3();
        (n, n.dot(p))
    }

    // -- refinement --------------------------------------------------------

    /// Edge bisected when `id` is refined, as `(x0, xk)` of the ordered vertices.
    pub fn refinement_edge(&self, id: TetId) -> (VertexId, VertexId) {
        let t = self.tet(id);
        (t.verts[0], t.verts[refinement_index(t.level)])
    }

    /// Splits one leaf at the midpoint of its refinement edge.
    ///
    /// Conformity is the caller's responsibility: every leaf around the
    /// refinement edge must be bisected along it as part of the same step
    /// (see [`refine_conforming`](Self::refine_conforming)).
    pub fn bisect(&mut self, id: TetId) -> Result<[TetId; 2], GridError> {
        let tet = self.get(id).ok_or(GridError::UnknownTet(id))?;
        if !tet.is_leaf() {
            return Err(GridError::NotALeaf(id));
        }
        if tet.level >= self.max_level {
            return Err(GridError::MaxLevelExceeded { tet: id, level: tet.level });
        }
        let level = tet.level;
        let x = tet.verts;
        let k = refinement_index(level);
        let (a, b) = (self.vertex(x[0]), self.vertex(x[k]));
        let mid = a.midpoint(b).ok_or(GridError::OddMidpoint(a, b))?;
        let z = self.intern(mid);

        self.unlink_leaf(id);
        self.leaf_count -= 1;

        let mut first = [z; 4];
        let mut second = [z; 4];
        for i in 0..4 {
            if i < k {
                first[i] = x[i];
                second[i] = x[i + 1];
            } else if i > k {
                first[i] = x[i];
                second[i] = x[i];
            }
        }
        let c0 = self.push_tet(first, level + 1, Some(id));
        let c1 = self.push_tet(second, level + 1, Some(id));
        {
            let t = &mut self.tets[id.index()];
            t.children = Some([c0, c1]);
            t.neighbors = [None; 4];
            t.payload = None;
        }
        self.link_leaf(c0);
        self.link_leaf(c1);
        Ok([c0, c1])
    }

    /// Bisects `id` and whatever else must be bisected to keep the grid
    /// conforming. Returns the leaves created by this call.
    pub fn refine_conforming(&mut self, id: TetId) -> Result<Vec<TetId>, GridError> {
        let tet = self.get(id).ok_or(GridError::UnknownTet(id))?;
        if !tet.is_leaf() {
            return Err(GridError::NotALeaf(id));
        }
        let mut created = Vec::new();
        self.refine_recursive(id, &mut created)?;
        created.retain(|t| self.tet(*t).is_leaf());
        created.sort_unstable();
        created.dedup();
        Ok(created)
    }

    fn refine_recursive(&mut self, id: TetId, created: &mut Vec<TetId>) -> Result<(), GridError> {
        let (a, b) = self.refinement_edge(id);
        let edge = EdgeKey::new(a, b);
        loop {
            let mismatched = self.edge_map.get(&edge).and_then(|ring| {
                ring.iter()
                    .copied()
                    .filter(|s| {
                        let (p, q) = self.refinement_edge(*s);
                        EdgeKey::new(p, q) != edge
                    })
                    .min()
            });
            match mismatched {
                Some(s) => self.refine_recursive(s, created)?,
                None => break,
            }
        }
        let mut ring = self.edge_map.get(&edge).cloned().unwrap_or_default();
        ring.sort_unstable();
        if let Some(&capped) = ring.iter().find(|s| self.tet(**s).level >= self.max_level) {
            return Err(GridError::MaxLevelExceeded {
                tet: capped,
                level: self.tet(capped).level,
            });
        }
        for s in ring {
            created.extend(self.bisect(s)?);
        }
        Ok(())
    }

    /// Refines every leaf until all leaves sit at least `levels` below the
    /// shallowest starting leaf.
    pub fn refine_uniform(&mut self, levels: u8) -> Result<(), GridError> {
        let base = self.leaves().map(|t| self.tet(t).level).min().unwrap_or(0);
        let target = base.saturating_add(levels);
        loop {
            let mut pending: Vec<(u8, TetId)> = self
                .leaves()
                .map(|t| (self.tet(t).level, t))
                .filter(|(l, _)| *l < target)
                .collect();
            if pending.is_empty() {
                return Ok(());
            }
            pending.sort_unstable();
            for (_, t) in pending {
                if self.tet(t).is_leaf() && self.tet(t).level < target {
                    self.refine_conforming(t)?;
                }
            }
        }
    }

    // -- adjacency ---------------------------------------------------------

    fn link_leaf(&mut self, id: TetId) {
        let verts = self.tets[id.index()].verts;
        for [i, j] in TET_EDGES {
            self.edge_map
                .entry(EdgeKey::new(verts[i], verts[j]))
                .or_default()
                .push(id);
        }
        for face in 0..4 {
            let key = self.tets[id.index()].face_key(face);
            let slot = self.face_map.entry(key).or_insert([None, None]);
            let other = match slot {
                [None, _] => {
                    slot[0] = Some(id);
                    slot[1]
                }
                [Some(o), None] => {
                    let o = *o;
                    slot[1] = Some(id);
                    Some(o)
                }
                [Some(_), Some(_)] => panic!("face {key:?} shared by more than two leaves"),
            };
            self.tets[id.index()].neighbors[face] = other;
            if let Some(o) = other {
                let j = self.tets[o.index()]
                    .face_index_of(&key)
                    .expect("face map entry disagrees with tet vertices");
                self.tets[o.index()].neighbors[j] = Some(id);
            }
        }
    }

    fn unlink_leaf(&mut self, id: TetId) {
        let verts = self.tets[id.index()].verts;
        for [i, j] in TET_EDGES {
            let key = EdgeKey::new(verts[i], verts[j]);
            if let Some(list) = self.edge_map.get_mut(&key) {
                list.retain(|t| *t != id);
                if list.is_empty() {
                    self.edge_map.remove(&key);
                }
            }
        }
        for face in 0..4 {
            let key = self.tets[id.index()].face_key(face);
            if let Some(slot) = self.face_map.get_mut(&key) {
                let other = if slot[0] == Some(id) { slot[1] } else { slot[0] };
                if let Some(o) = other {
                    *slot = [Some(o), None];
                    if let Some(j) = self.tets[o.index()].face_index_of(&key) {
                        self.tets[o.index()].neighbors[j] = None;
                    }
                } else {
                    self.face_map.remove(&key);
                }
            }
        }
    }

    /// Recomputes edge and face indices and all neighbor links from the leaf set.
    pub fn rebuild_adjacency(&mut self) {
        self.edge_map.clear();
        self.face_map.clear();
        for t in &mut self.tets {
            t.neighbors = [None; 4];
        }
        let leaves: Vec<TetId> = self.leaves().collect();
        for id in leaves {
            self.link_leaf(id);
        }
    }

    /// Reassembles a grid from serialized pools, rebuilding lookup tables.
    ///
    /// Neighbor links are kept as given so that corruption in a stored file
    /// is visible to [`validate`](Self::validate).
    pub fn from_parts(
        vertices: Vec<Vertex>,
        tets: Vec<Tet>,
        roots: [TetId; ROOT_COUNT],
        max_level: u8,
    ) -> Result<Self, GridError> {
        let nv = vertices.len();
        let nt = tets.len();
        let bad = |msg: String| Err(GridError::Corrupt(msg));
        for r in roots {
            if r.index() >= nt {
                return bad(format!("root {r:?} out of range"));
            }
        }
        for (i, t) in tets.iter().enumerate() {
            if t.verts.iter().any(|v| v.index() >= nv) {
                return bad(format!("tet {i} references a missing vertex"));
            }
            let refs = t
                .children
                .iter()
                .flatten()
                .chain(t.parent.iter())
                .chain(t.neighbors.iter().flatten());
            for r in refs {
                if r.index() >= nt {
                    return bad(format!("tet {i} references missing tet {r:?}"));
                }
            }
        }
        let mut vertex_lookup = HashMap::with_capacity(nv);
        for (i, v) in vertices.iter().enumerate() {
            if v.pos.iter().any(|&c| c > FIXED_ONE) {
                return bad(format!("vertex {i} outside the unit cube"));
            }
            if vertex_lookup.insert(*v, VertexId(i as u32)).is_some() {
                return bad(format!("vertex {i} duplicates an earlier position"));
            }
        }
        let leaf_count = tets.iter().filter(|t| t.is_leaf()).count();
        let mut grid = TetGrid {
            vertices,
            vertex_lookup,
            tets,
            roots,
            edge_map: HashMap::new(),
            face_map: HashMap::new(),
            max_level: max_level.min(DEFAULT_MAX_LEVEL),
            leaf_count,
        };
        let stored: Vec<[Option<TetId>; 4]> = grid.tets.iter().map(|t| t.neighbors).collect();
        for id in grid.leaves().collect::<Vec<_>>() {
            let verts = grid.tets[id.index()].verts;
            for [i, j] in TET_EDGES {
                grid.edge_map
                    .entry(EdgeKey::new(verts[i], verts[j]))
                    .or_default()
                    .push(id);
            }
            for face in 0..4 {
                let key = grid.tets[id.index()].face_key(face);
                let slot = grid.face_map.entry(key).or_insert([None, None]);
                match slot {
                    [None, _] => slot[0] = Some(id),
                    [Some(_), None] => slot[1] = Some(id),
                    _ => return bad(format!("face {key:?} shared by more than two leaves")),
                }
            }
        }
        for (t, n) in grid.tets.iter_mut().zip(stored) {
            t.neighbors = n;
        }
        Ok(grid)
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    pub fn set_payload(&mut self, id: TetId, payload: MediaPayload) {
        self.tets[id.index()].payload = Some(payload);
    }
}
