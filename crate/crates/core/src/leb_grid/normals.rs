//! The closed set of face orientations produced by bisecting the 24 cube roots.

use std::fmt;

use glam::DVec3;

use super::{GridError, Vertex};

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Integer direction of every canonical normal; entries have components in {-1, 0, 1}.
pub const FACE_DIRECTIONS: [[i8; 3]; 18] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [-1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [-1, 0, 1],
    [-1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [0, -1, 1],
    [0, -1, -1],
];

/// Unit normals matching [`FACE_DIRECTIONS`] entry for entry.
pub const FACE_NORMALS: [[f64; 3]; 18] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
    [H, H, 0.0],
    [H, -H, 0.0],
    [-H, H, 0.0],
    [-H, -H, 0.0],
    [H, 0.0, H],
    [H, 0.0, -H],
    [-H, 0.0, H],
    [-H, 0.0, -H],
    [0.0, H, H],
    [0.0, H, -H],
    [0.0, -H, H],
    [0.0, -H, -H],
];

/// Index into the 18-entry canonical normal table. Fits in 5 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FaceNormalId(u8);

impl FaceNormalId {
    pub const COUNT: usize = 18;

    pub fn new(id: u8) -> Option<Self> {
        ((id as usize) < Self::COUNT).then_some(Self(id))
    }

    #[inline]
    pub fn index(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn normal(self) -> DVec3 {
        DVec3::from_array(FACE_NORMALS[self.0 as usize])
    }

    #[inline]
    pub fn direction(self) -> [i8; 3] {
        FACE_DIRECTIONS[self.0 as usize]
    }

    /// Looks up an integer direction, which must already be reduced to {-1, 0, 1} components.
    pub fn from_direction(dir: [i8; 3]) -> Option<Self> {
        FACE_DIRECTIONS
            .iter()
            .position(|d| *d == dir)
            .map(|i| Self(i as u8))
    }
}

impl fmt::Display for FaceNormalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.direction();
        write!(f, "n{}({x},{y},{z})", self.0)
    }
}

fn sub(a: Vertex, b: Vertex) -> [i64; 3] {
    [
        a.pos[0] as i64 - b.pos[0] as i64,
        a.pos[1] as i64 - b.pos[1] as i64,
        a.pos[2] as i64 - b.pos[2] as i64,
    ]
}

/// Outward normal id of the face `(a, b, c)` as seen from `interior`.
///
/// The cross product is evaluated exactly on fixed-point coordinates, so a
/// face either reduces to a table direction or is reported as `NotCanonical`.
pub fn face_normal_id(
    a: Vertex,
    b: Vertex,
    c: Vertex,
    interior: Vertex,
) -> Result<FaceNormalId, GridError> {
    let u = sub(b, a);
    let v = sub(c, a);
    let mut n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let w = sub(interior, a);
    let side: i128 = (0..3).map(|i| n[i] as i128 * w[i] as i128).sum();
    if side > 0 {
        n = n.map(|x| -x);
    }
    reduce_direction(n)
        .and_then(FaceNormalId::from_direction)
        .ok_or(GridError::NotCanonical { normal: n })
}

/// Reduces an integer vector whose nonzero components share one magnitude
/// to its sign pattern.
fn reduce_direction(n: [i64; 3]) -> Option<[i8; 3]> {
    let mag = n.iter().map(|x| x.abs()).max()?;
    if mag == 0 {
        return None;
    }
    let mut out = [0i8; 3];
    for (o, &x) in out.iter_mut().zip(n.iter()) {
        if x != 0 && x.abs() != mag {
            return None;
        }
        *o = x.signum() as i8;
    }
    Some(out)
}
