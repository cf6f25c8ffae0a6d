//! Regular voxel grid medium, traversed with a 3D DDA. Baseline for the
//! adaptive renderer.

use glam::DVec3;

use crate::builder::MediaPayload;
use crate::camera::PinholeCamera;
use crate::ray::{intersect_unit_cube, Ray};
use crate::tracer::{render_medium, CellSpan, ImageAccumulator, MarchStats, Medium, RenderConfig, WalkEnd};
use crate::volume::{DenseVolume, ALBEDO, TEMPERATURE};

/// One constant cell per voxel; cell `(i, j, k)` spans `[i/nx, (i+1)/nx)` and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularGrid {
    dims: [usize; 3],
    density: Vec<f32>,
    temperature: Option<Vec<f32>>,
    albedo: Option<Vec<f32>>,
}

impl RegularGrid {
    pub fn from_volume(vol: &DenseVolume) -> Self {
        Self {
            dims: vol.dims(),
            density: vol.density().to_vec(),
            temperature: vol.channel(TEMPERATURE).map(<[f32]>::to_vec),
            albedo: vol.channel(ALBEDO).map(<[f32]>::to_vec),
        }
    }

    /// Every cell carries `payload`.
    pub fn constant(dims: [usize; 3], payload: MediaPayload) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            density: vec![payload.density; n],
            temperature: payload.temperature.map(|t| vec![t; n]),
            albedo: payload.albedo.map(|a| vec![a; n]),
        }
    }

    /// Multiplies every density, as the adaptive builder does for its leaves.
    pub fn with_density_scale(mut self, scale: f64) -> Self {
        if scale != 1.0 {
            for d in &mut self.density {
                *d = (*d as f64 * scale) as f32;
            }
        }
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn densities(&self) -> &[f32] {
        &self.density
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn payload(&self, cell: usize) -> MediaPayload {
        MediaPayload {
            density: self.density[cell],
            temperature: self.temperature.as_ref().map(|t| t[cell]),
            albedo: self.albedo.as_ref().map(|a| a[cell].clamp(0.0, 1.0)),
        }
    }

    /// Axis-aligned bounds of a cell.
    pub fn cell_bounds(&self, i: usize, j: usize, k: usize) -> (DVec3, DVec3) {
        let ijk = [i, j, k];
        let lo = DVec3::from_array([0, 1, 2].map(|a| ijk[a] as f64 / self.dims[a] as f64));
        let hi = DVec3::from_array([0, 1, 2].map(|a| (ijk[a] + 1) as f64 / self.dims[a] as f64));
        (lo, hi)
    }

    /// Cells along `ray` in order as `(cell index, t_enter, t_exit)`.
    pub fn dda_march(&self, ray: &Ray) -> Dda<'_> {
        Dda::new(self, ray)
    }

    /// Clips `ray` against every cell box independently. Test oracle for [`dda_march`](Self::dda_march).
    pub fn brute_force_cells(&self, ray: &Ray) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let (lo, hi) = self.cell_bounds(i, j, k);
                    let mut t0 = ray.t_min;
                    let mut t1 = ray.t_max;
                    let mut hit = true;
                    for a in 0..3 {
                        let (o, d) = (ray.origin[a], ray.direction[a]);
                        if d == 0.0 {
                            hit &= o >= lo[a] && o < hi[a];
                        } else {
                            let (ta, tb) = ((lo[a] - o) / d, (hi[a] - o) / d);
                            t0 = t0.max(ta.min(tb));
                            t1 = t1.min(ta.max(tb));
                        }
                    }
                    if hit && t1 > t0 {
                        out.push((self.index(i, j, k), t0, t1));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1));
        out
    }
}

/// Amanatides-Woo traversal state.
#[derive(Debug, Clone)]
pub struct Dda<'a> {
    grid: &'a RegularGrid,
    cell: [i64; 3],
    step: [i64; 3],
    t_next: [f64; 3],
    t: f64,
    t_end: f64,
    dir: DVec3,
    origin: DVec3,
    done: bool,
}

impl<'a> Dda<'a> {
    fn new(grid: &'a RegularGrid, ray: &Ray) -> Self {
        let mut dda = Dda {
            grid,
            cell: [0; 3],
            step: [0; 3],
            t_next: [f64::INFINITY; 3],
            t: 0.0,
            t_end: 0.0,
            dir: ray.direction,
            origin: ray.origin,
            done: true,
        };
        let Some((t0, t1)) = intersect_unit_cube(ray) else {
            return dda;
        };
        dda.t = t0;
        dda.t_end = t1.min(ray.t_max);
        dda.done = dda.t_end <= t0;
        let p = ray.at(t0);
        for a in 0..3 {
            let n = grid.dims[a] as i64;
            let d = ray.direction[a];
            let x = p[a] * n as f64;
            let mut i = x.floor() as i64;
            // On a cell boundary, start in the cell the ray moves into.
            if d < 0.0 && x == x.floor() {
                i -= 1;
            }
            dda.cell[a] = i.clamp(0, n - 1);
            dda.step[a] = if d > 0.0 { 1 } else if d < 0.0 { -1 } else { 0 };
            dda.t_next[a] = dda.boundary_t(a);
        }
        dda
    }

    fn boundary_t(&self, a: usize) -> f64 {
        let n = self.grid.dims[a] as f64;
        let d = self.dir[a];
        if d > 0.0 {
            ((self.cell[a] + 1) as f64 / n - self.origin[a]) / d
        } else if d < 0.0 {
            (self.cell[a] as f64 / n - self.origin[a]) / d
        } else {
            f64::INFINITY
        }
    }
}

impl Iterator for Dda<'_> {
    type Item = (usize, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let axis = (0..3)
                .min_by(|a, b| self.t_next[*a].total_cmp(&self.t_next[*b]))
                .unwrap();
            let t_exit = self.t_next[axis].min(self.t_end);
            let [i, j, k] = self.cell.map(|c| c as usize);
            let cell = self.grid.index(i, j, k);
            let t_enter = self.t;
            if t_exit >= self.t_end {
                self.done = true;
            } else {
                self.cell[axis] += self.step[axis];
                if self.cell[axis] < 0 || self.cell[axis] >= self.grid.dims[axis] as i64 {
                    self.done = true;
                }
                self.t_next[axis] = self.boundary_t(axis);
                self.t = t_exit.max(t_enter);
            }
            if t_exit > t_enter {
                return Some((cell, t_enter, t_exit));
            }
        }
        None
    }
}

impl Medium for RegularGrid {
    type Cell = usize;

    /// The start hint is ignored: DDA setup is already O(1).
    fn walk(
        &self,
        ray: &Ray,
        _start: Option<usize>,
        stats: &mut MarchStats,
        mut visit: impl FnMut(&CellSpan<usize>) -> bool,
    ) -> WalkEnd {
        let dda = self.dda_march(ray);
        if dda.done && intersect_unit_cube(ray).is_none() {
            return WalkEnd::Missed;
        }
        for (cell, t_enter, t_exit) in dda {
            stats.cells_visited += 1;
            if !visit(&CellSpan { cell, t_enter, t_exit, payload: self.payload(cell) }) {
                return WalkEnd::Stopped;
            }
        }
        WalkEnd::Exited
    }

    fn cell_count(&self) -> usize {
        self.density.len()
    }
}

/// Renders the regular grid with the same integrator and RNG keying as the
/// tetrahedral renderer.
pub fn render_reference(grid: &RegularGrid, cam: &PinholeCamera, cfg: &RenderConfig) -> ImageAccumulator {
    render_medium(grid, cam, cfg)
}
