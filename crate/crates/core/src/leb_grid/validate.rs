//! Exhaustive consistency check of a [`TetGrid`].

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{
    face_normal_id, signed_det, EdgeKey, FaceKey, TetGrid, TetId, CUBE_DET, FACE_VERTS,
    FIXED_ONE, TET_EDGES,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Degenerate(TetId),
    VolumeNotHalved { parent: TetId, child: TetId },
    VolumeSum { expected: i128, found: i128 },
    NonConforming { tet: TetId, face: usize },
    OverSharedFace { face: FaceKey },
    Neighbor { tet: TetId, face: usize, expected: Option<TetId>, found: Option<TetId> },
    Reciprocity { tet: TetId, neighbor: TetId },
    Normal { tet: TetId, face: usize },
    EdgeMap(String),
    Payload(TetId),
    Structure(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Degenerate(t) => write!(f, "tet {} has zero volume", t.0),
            Violation::VolumeNotHalved { parent, child } => {
                write!(f, "child {} of tet {} is not half its parent", child.0, parent.0)
            }
            Violation::VolumeSum { expected, found } => {
                write!(f, "leaf volumes sum to {found}, expected {expected} (fixed point)")
            }
            Violation::NonConforming { tet, face } => write!(
                f,
                "face {face} of tet {} is unmatched but not on the cube boundary (T-junction)",
                tet.0
            ),
            Violation::OverSharedFace { face } => {
                write!(f, "face {:?} is shared by more than two leaves", face.0)
            }
            Violation::Neighbor { tet, face, expected, found } => write!(
                f,
                "tet {} face {face}: neighbor {:?}, expected {:?}",
                tet.0,
                found.map(|t| t.0),
                expected.map(|t| t.0)
            ),
            Violation::Reciprocity { tet, neighbor } => {
                write!(f, "tet {} lists {} but is not listed back", tet.0, neighbor.0)
            }
            Violation::Normal { tet, face } => {
                write!(f, "tet {} face {face}: stored normal is wrong or non-canonical", tet.0)
            }
            Violation::EdgeMap(msg) => write!(f, "edge map: {msg}"),
            Violation::Payload(t) => write!(f, "tet {}: payload present iff leaf violated", t.0),
            Violation::Structure(msg) => write!(f, "structure: {msg}"),
        }
    }
}

/// Result of [`TetGrid::validate`]: counts plus the first violation found.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub leaf_count: usize,
    pub interior_faces: usize,
    pub boundary_faces: usize,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violation.is_none()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.violation {
            None => write!(
                f,
                "ok: {} leaves, {} interior faces, {} boundary faces",
                self.leaf_count, self.interior_faces, self.boundary_faces
            ),
            Some(v) => write!(f, "FAIL: {v}"),
        }
    }
}

pub(super) fn validate(grid: &TetGrid) -> ValidationReport {
    let mut report = ValidationReport {
        leaf_count: 0,
        interior_faces: 0,
        boundary_faces: 0,
        violation: None,
    };
    if let Err(v) = check(grid, &mut report) {
        report.violation = Some(v);
    }
    report
}

fn check(grid: &TetGrid, report: &mut ValidationReport) -> Result<(), Violation> {
    let leaves: Vec<TetId> = grid.leaves().collect();
    report.leaf_count = leaves.len();
    if leaves.len() != grid.leaf_count() {
        return Err(Violation::Structure(format!(
            "leaf counter {} disagrees with {} leaves",
            grid.leaf_count(),
            leaves.len()
        )));
    }

    // Tree structure and exact volumes.
    for (i, tet) in grid.tets().iter().enumerate() {
        let id = TetId(i as u32);
        let det = signed_det(grid.positions(id));
        if det == 0 {
            return Err(Violation::Degenerate(id));
        }
        if let Some(children) = tet.children {
            if tet.payload.is_some() {
                return Err(Violation::Payload(id));
            }
            for c in children {
                let child = grid.tet(c);
                if child.parent != Some(id) || child.level != tet.level + 1 {
                    return Err(Violation::Structure(format!(
                        "tet {} does not point back to parent {i}",
                        c.0
                    )));
                }
                if signed_det(grid.positions(c)).abs() * 2 != det.abs() {
                    return Err(Violation::VolumeNotHalved { parent: id, child: c });
                }
            }
        }
    }
    let with_payload = leaves.iter().filter(|t| grid.tet(**t).payload.is_some()).count();
    if with_payload != 0 && with_payload != leaves.len() {
        let missing = leaves.iter().find(|t| grid.tet(**t).payload.is_none()).unwrap();
        return Err(Violation::Payload(*missing));
    }
    let total: i128 = leaves.iter().map(|t| signed_det(grid.positions(*t)).abs()).sum();
    if total != CUBE_DET {
        return Err(Violation::VolumeSum { expected: CUBE_DET, found: total });
    }
    let float_total: f64 = leaves.iter().map(|t| grid.volume(*t)).sum();
    if (float_total - 1.0).abs() > 1e-12 {
        return Err(Violation::VolumeSum { expected: CUBE_DET, found: total });
    }

    // Exhaustive face matching.
    let mut faces: HashMap<FaceKey, Vec<(TetId, usize)>> = HashMap::with_capacity(leaves.len() * 3);
    for &t in &leaves {
        let tet = grid.tet(t);
        for f in 0..4 {
            faces.entry(tet.face_key(f)).or_default().push((t, f));
        }
    }
    for (key, owners) in &faces {
        match owners.len() {
            1 => {
                let (t, f) = owners[0];
                if !on_cube_boundary(grid, key) {
                    return Err(Violation::NonConforming { tet: t, face: f });
                }
                report.boundary_faces += 1;
            }
            2 => {
                if on_cube_boundary(grid, key) {
                    return Err(Violation::OverSharedFace { face: *key });
                }
                report.interior_faces += 1;
            }
            _ => return Err(Violation::OverSharedFace { face: *key }),
        }
    }

    // Reciprocity first, then every link against the face matching.
    for &t in &leaves {
        for n in grid.tet(t).neighbors.into_iter().flatten() {
            let back = grid.get(n);
            if !back.is_some_and(|b| b.is_leaf() && b.neighbors.contains(&Some(t))) {
                return Err(Violation::Reciprocity { tet: t, neighbor: n });
            }
        }
    }
    for &t in &leaves {
        let tet = grid.tet(t);
        for f in 0..4 {
            let owners = &faces[&tet.face_key(f)];
            let expected = owners.iter().map(|(o, _)| *o).find(|o| *o != t);
            if tet.neighbors[f] != expected {
                return Err(Violation::Neighbor {
                    tet: t,
                    face: f,
                    expected,
                    found: tet.neighbors[f],
                });
            }
        }
    }
    for (i, tet) in grid.tets().iter().enumerate() {
        if !tet.is_leaf() && tet.neighbors.iter().any(Option::is_some) {
            return Err(Violation::Structure(format!("internal tet {i} carries neighbor links")));
        }
    }

    // Stored normals must be the canonical outward normals.
    for (i, tet) in grid.tets().iter().enumerate() {
        let p = grid.positions(TetId(i as u32));
        for f in 0..4 {
            let [a, b, c] = FACE_VERTS[f].map(|s| p[s]);
            match face_normal_id(a, b, c, p[f]) {
                Ok(id) if id == tet.normals[f] => {}
                _ => return Err(Violation::Normal { tet: TetId(i as u32), face: f }),
            }
        }
    }

    // Edge map holds exactly the leaf edges.
    let mut expected: HashMap<EdgeKey, HashSet<TetId>> = HashMap::new();
    for &t in &leaves {
        let v = grid.tet(t).verts;
        for [a, b] in TET_EDGES {
            expected.entry(EdgeKey::new(v[a], v[b])).or_default().insert(t);
        }
    }
    let actual = grid.edge_map();
    if actual.len() != expected.len() {
        return Err(Violation::EdgeMap(format!(
            "{} edges indexed, {} leaf edges",
            actual.len(),
            expected.len()
        )));
    }
    for (edge, want) in &expected {
        let Some(have) = actual.get(edge) else {
            return Err(Violation::EdgeMap(format!("missing edge {edge:?}")));
        };
        let have_set: HashSet<TetId> = have.iter().copied().collect();
        if have_set.len() != have.len() || have_set != *want {
            return Err(Violation::EdgeMap(format!("wrong leaves on edge {edge:?}")));
        }
    }
    Ok(())
}

fn on_cube_boundary(grid: &TetGrid, key: &FaceKey) -> bool {
    let p = key.0.map(|v| grid.vertex(v));
    (0..3).any(|axis| {
        let c = p[0].pos[axis];
        (c == 0 || c == FIXED_ONE) && p.iter().all(|v| v.pos[axis] == c)
    })
}
