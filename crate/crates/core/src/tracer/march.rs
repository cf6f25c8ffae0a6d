//! Cell marching over a piecewise-constant medium.

use std::ops::AddAssign;

use glam::DVec3;

use crate::builder::MediaPayload;
use crate::leb_grid::{Segment, TetGrid, TetId};
use crate::ray::{intersect_unit_cube, Ray};

/// Distance a stuck walk is pushed along the ray before relocating.
pub const NUDGE: f64 = 1e-7;
/// Faces whose normal is this close to perpendicular to the ray are ignored.
const TANGENT_EPS: f64 = 1e-12;
/// Consecutive zero-length steps tolerated before the walk counts as stuck.
const MAX_ZERO_STEPS: u32 = 64;

/// Counters gathered while marching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MarchStats {
    pub cells_visited: u64,
    pub degenerate: u64,
}

impl AddAssign for MarchStats {
    fn add_assign(&mut self, o: Self) {
        self.cells_visited += o.cells_visited;
        self.degenerate += o.degenerate;
    }
}

/// One cell crossed by a ray, over `[t_enter, t_exit]` of the ray parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpan<C> {
    pub cell: C,
    pub t_enter: f64,
    pub t_exit: f64,
    pub payload: MediaPayload,
}

/// How a walk ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkEnd {
    /// The ray left the cube.
    Exited,
    /// The visitor asked to stop.
    Stopped,
    /// The ray never enters the cube.
    Missed,
    /// Marching got stuck twice and gave up.
    Aborted,
}

/// A medium made of cells with constant properties inside the unit cube.
pub trait Medium: Sync {
    type Cell: Copy + PartialEq + std::fmt::Debug;

    /// Visits the cells along `ray` in order, from the later of the cube entry
    /// and `ray.t_min`. `start` may name the cell containing the first point.
    /// Zero-length crossings are not reported. `visit` returns `false` to stop.
    fn walk(
        &self,
        ray: &Ray,
        start: Option<Self::Cell>,
        stats: &mut MarchStats,
        visit: impl FnMut(&CellSpan<Self::Cell>) -> bool,
    ) -> WalkEnd;

    /// Number of cells in the medium.
    fn cell_count(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("ray is tangent to every face of the cell")]
pub struct Degenerate;

/// Face through which `ray` leaves `cell`, and the ray parameter there.
///
/// Only faces whose outward normal has a positive component along the ray are
/// tested, so at most three planes are intersected. Ties keep the lowest face index.
pub fn exit_face(grid: &TetGrid, cell: TetId, ray: &Ray) -> Result<(usize, f64), Degenerate> {
    let tet = grid.tet(cell);
    let mut best: Option<(usize, f64)> = None;
    for f in 0..4 {
        let n = tet.normals[f].normal();
        let d = n.dot(ray.direction);
        if d <= TANGENT_EPS {
            continue;
        }
        let (_, off) = grid.face_plane(cell, f);
        let t = (off - n.dot(ray.origin)) / d;
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((f, t));
        }
    }
    best.ok_or(Degenerate)
}

/// Number of faces that [`exit_face`] considers for this direction.
pub fn candidate_faces(grid: &TetGrid, cell: TetId, direction: DVec3) -> usize {
    grid.tet(cell)
        .normals
        .iter()
        .filter(|n| n.normal().dot(direction) > TANGENT_EPS)
        .count()
}

fn clamp_to_cube(p: DVec3) -> DVec3 {
    p.clamp(DVec3::ZERO, DVec3::ONE)
}

impl Medium for TetGrid {
    type Cell = TetId;

    fn walk(
        &self,
        ray: &Ray,
        start: Option<TetId>,
        stats: &mut MarchStats,
        mut visit: impl FnMut(&CellSpan<TetId>) -> bool,
    ) -> WalkEnd {
        let Some((t0, t1)) = intersect_unit_cube(ray) else {
            return WalkEnd::Missed;
        };
        let relocate = |t: f64| self.locate_directed(clamp_to_cube(ray.at(t)), ray.direction).ok();
        let mut t = t0;
        let Some(mut cell) = start.or_else(|| relocate(t)) else {
            return WalkEnd::Missed;
        };
        let mut nudged = false;
        let mut zero_steps = 0;
        loop {
            stats.cells_visited += 1;
            let step = exit_face(self, cell, ray).ok().filter(|_| zero_steps <= MAX_ZERO_STEPS);
            let Some((face, t_exit)) = step else {
                if nudged {
                    stats.degenerate += 1;
                    return WalkEnd::Aborted;
                }
                nudged = true;
                zero_steps = 0;
                t += NUDGE;
                if t >= t1 {
                    return WalkEnd::Exited;
                }
                match relocate(t) {
                    Some(c) => cell = c,
                    None => return WalkEnd::Exited,
                }
                continue;
            };
            let t_exit = t_exit.max(t).min(ray.t_max);
            if t_exit > t {
                zero_steps = 0;
                let span = CellSpan {
                    cell,
                    t_enter: t,
                    t_exit,
                    payload: self.tet(cell).payload.unwrap_or(MediaPayload::VACUUM),
                };
                if !visit(&span) {
                    return WalkEnd::Stopped;
                }
            } else {
                zero_steps += 1;
            }
            if t_exit >= ray.t_max {
                return WalkEnd::Exited;
            }
            match self.tet(cell).neighbors[face] {
                Some(next) => {
                    t = t_exit;
                    cell = next;
                }
                None => return WalkEnd::Exited,
            }
        }
    }

    fn cell_count(&self) -> usize {
        self.leaf_count()
    }
}

/// The ordered leaf segments produced by marching, in the same form as
/// [`TetGrid::brute_force_segments`].
pub fn march_segments(grid: &TetGrid, ray: &Ray, stats: &mut MarchStats) -> Vec<Segment> {
    let mut out = Vec::new();
    grid.walk(ray, None, stats, |s| {
        out.push(Segment { tet: s.cell, t_enter: s.t_enter, t_exit: s.t_exit });
        true
    });
    out
}

/// Optical depth along the part of `ray` inside the cube.
pub fn optical_depth<M: Medium>(medium: &M, ray: &Ray, stats: &mut MarchStats) -> f64 {
    let mut tau = 0.0;
    medium.walk(ray, None, stats, |s| {
        tau += s.payload.density as f64 * (s.t_exit - s.t_enter);
        true
    });
    tau
}

/// Beer-Lambert transmittance `exp(-sum lambda_i dt_i)` along `ray`.
pub fn march_transmittance<M: Medium>(medium: &M, ray: &Ray, stats: &mut MarchStats) -> f64 {
    (-optical_depth(medium, ray, stats)).exp()
}

/// Outcome of free-path sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreePath<C> {
    Collision { t: f64, position: DVec3, cell: C, payload: MediaPayload },
    /// Left the cube (or ran past `t_max`) without interacting.
    Escaped,
    Aborted,
}

/// Regular tracking: draws the optical depth `-ln(1 - xi)` and walks cells
/// until it has been accumulated.
pub fn sample_free_path<M: Medium>(
    medium: &M,
    ray: &Ray,
    start: Option<M::Cell>,
    xi: f64,
    stats: &mut MarchStats,
) -> FreePath<M::Cell> {
    let target = -(1.0 - xi).ln();
    let mut acc = 0.0;
    let mut hit = None;
    let end = medium.walk(ray, start, stats, |s| {
        let lambda = s.payload.density as f64;
        let dtau = lambda * (s.t_exit - s.t_enter);
        if lambda > 0.0 && acc + dtau >= target {
            let t = (s.t_enter + (target - acc) / lambda).min(s.t_exit);
            hit = Some(FreePath::Collision { t, position: ray.at(t), cell: s.cell, payload: s.payload });
            return false;
        }
        acc += dtau;
        true
    });
    match (hit, end) {
        (Some(c), _) => c,
        (None, WalkEnd::Aborted) => FreePath::Aborted,
        _ => FreePath::Escaped,
    }
}
