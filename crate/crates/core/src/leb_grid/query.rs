//! Point location and the brute-force ray/leaf oracle.

use glam::DVec3;

use super::{GridError, TetGrid, TetId};
use crate::ray::Ray;

/// Tolerance for "on the plane" decisions in unit-cube coordinates.
const PLANE_EPS: f64 = 1e-12;

/// A ray parameter interval spent inside one leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub tet: TetId,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl Segment {
    #[inline]
    pub fn length(&self) -> f64 {
        self.t_exit - self.t_enter
    }
}

impl TetGrid {
    /// Leaf whose closed cell contains `p`. Points on shared faces go to the
    /// lowest root id and then to the first child at every split.
    pub fn locate_point(&self, p: DVec3) -> Result<TetId, GridError> {
        self.locate(p, None)
    }

    /// Like [`locate_point`](Self::locate_point), but ties on shared faces are
    /// broken towards the cell that `direction` moves into.
    pub fn locate_directed(&self, p: DVec3, direction: DVec3) -> Result<TetId, GridError> {
        self.locate(p, Some(direction))
    }

    fn locate(&self, p: DVec3, dir: Option<DVec3>) -> Result<TetId, GridError> {
        if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) || !(0.0..=1.0).contains(&p.z)
        {
            return Err(GridError::OutsideGrid(p));
        }
        let root = self
            .roots()
            .iter()
            .copied()
            .find(|r| self.contains(*r, p, dir))
            // Rounding can leave a point just outside every root; take the closest.
            .unwrap_or_else(|| {
                self.roots()
                    .iter()
                    .copied()
                    .min_by(|a, b| self.outside_distance(*a, p).total_cmp(&self.outside_distance(*b, p)))
                    .expect("24 roots")
            });
        let mut cur = root;
        while let Some([first, second]) = self.tet(cur).children {
            // Face 0 of the first child is the bisection plane, outward towards the second.
            let (n, off) = self.face_plane(first, 0);
            let s = n.dot(p) - off;
            cur = if s > PLANE_EPS {
                second
            } else if s < -PLANE_EPS {
                first
            } else {
                match dir {
                    Some(d) if n.dot(d) > 0.0 => second,
                    _ => first,
                }
            };
        }
        Ok(cur)
    }

    fn contains(&self, id: TetId, p: DVec3, dir: Option<DVec3>) -> bool {
        (0..4).all(|f| {
            let (n, off) = self.face_plane(id, f);
            let s = n.dot(p) - off;
            if s > PLANE_EPS {
                false
            } else if s >= -PLANE_EPS {
                dir.is_none_or(|d| n.dot(d) <= 0.0)
            } else {
                true
            }
        })
    }

    fn outside_distance(&self, id: TetId, p: DVec3) -> f64 {
        (0..4)
            .map(|f| {
                let (n, off) = self.face_plane(id, f);
                n.dot(p) - off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Closed point-in-leaf test with a small tolerance.
    pub fn point_in_tet(&self, id: TetId, p: DVec3, eps: f64) -> bool {
        self.outside_distance(id, p) <= eps
    }

    /// Clips `ray` independently against every leaf. Test oracle for marching.
    pub fn brute_force_segments(&self, ray: &Ray) -> Vec<Segment> {
        let mut out: Vec<Segment> = self
            .leaves()
            .filter_map(|t| {
                let mut t0 = ray.t_min;
                let mut t1 = ray.t_max;
                for f in 0..4 {
                    let (n, off) = self.face_plane(t, f);
                    let denom = n.dot(ray.direction);
                    let num = off - n.dot(ray.origin);
                    if denom > 0.0 {
                        t1 = t1.min(num / denom);
                    } else if denom < 0.0 {
                        t0 = t0.max(num / denom);
                    } else if num < 0.0 {
                        return None;
                    }
                }
                (t1 > t0).then_some(Segment { tet: t, t_enter: t0, t_exit: t1 })
            })
            .collect();
        out.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter).then(a.tet.cmp(&b.tet)));
        out
    }
}
