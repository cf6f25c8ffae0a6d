//! Adaptive grid construction from a dense volume.
//!
//! Leaves are visited in ascending `(level, id)` order. A leaf is refined when
//! the relative density spread inside it exceeds the threshold and, with the
//! camera enabled, it is at least partly in view and larger than the pixel
//! threshold on screen. Splits forced by conformity happen regardless.

mod io;

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use io::{load_grid, read_grid, save_grid, write_grid, GridFormatError, TGRID_MAGIC, TGRID_VERSION};

use crate::camera::PinholeCamera;
use crate::leb_grid::{GridError, TetGrid, TetId, DEFAULT_MAX_LEVEL};
use crate::volume::{variation_metric, DenseVolume, ALBEDO, TEMPERATURE};

/// Medium carried by a leaf. Optional channels are absent when the source
/// volume lacks them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediaPayload {
    /// Extinction per unit length.
    pub density: f32,
    pub temperature: Option<f32>,
    pub albedo: Option<f32>,
}

impl MediaPayload {
    pub const VACUUM: MediaPayload = MediaPayload { density: 0.0, temperature: None, albedo: None };

    pub fn with_density(density: f32) -> Self {
        Self { density, ..Self::VACUUM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub variation_threshold: f64,
    pub max_level: u8,
    pub use_camera: bool,
    pub pixel_threshold: f64,
    pub density_scale: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            variation_threshold: 0.5,
            max_level: 18,
            use_camera: false,
            pixel_threshold: 1.0,
            density_scale: 1.0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.variation_threshold >= 0.0) || !self.variation_threshold.is_finite() {
            return Err(BuildError::Config(format!(
                "variation threshold must be a finite value >= 0, got {}",
                self.variation_threshold
            )));
        }
        if !(self.pixel_threshold > 0.0) {
            return Err(BuildError::Config(format!(
                "pixel threshold must be > 0, got {}",
                self.pixel_threshold
            )));
        }
        if self.max_level > DEFAULT_MAX_LEVEL {
            return Err(BuildError::Config(format!(
                "max level {} exceeds the grid cap {DEFAULT_MAX_LEVEL}",
                self.max_level
            )));
        }
        if !(self.density_scale >= 0.0) || !self.density_scale.is_finite() {
            return Err(BuildError::Config(format!(
                "density scale must be a finite value >= 0, got {}",
                self.density_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid build configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("camera criteria requested but no camera given")]
    MissingCamera,
}

/// A finished grid plus bookkeeping about how it was refined.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub grid: TetGrid,
    /// Tets bisected because their own criteria fired, in processing order.
    pub criterion_splits: Vec<TetId>,
    /// Bisections performed only to keep the grid conforming.
    pub forced_splits: usize,
    pub seconds: f64,
}

/// Whether `tet` passes the subdivision criteria on its own.
pub fn wants_refinement(
    grid: &TetGrid,
    tet: TetId,
    vol: &DenseVolume,
    cfg: &BuildConfig,
    cam: Option<&PinholeCamera>,
) -> bool {
    if grid.tet(tet).level >= cfg.max_level {
        return false;
    }
    let geom = grid.geometry(tet);
    if cfg.use_camera {
        if let Some(cam) = cam {
            if cam.tet_outside_frustum(&geom) || cam.projected_size_pixels(&geom) <= cfg.pixel_threshold {
                return false;
            }
        }
    }
    variation_metric(&vol.density_stats_in_tet(&geom)) > cfg.variation_threshold
}

pub fn build_adaptive_grid(
    vol: &DenseVolume,
    cfg: &BuildConfig,
    cam: Option<&PinholeCamera>,
) -> Result<BuildOutcome, BuildError> {
    cfg.validate()?;
    if cfg.use_camera && cam.is_none() {
        return Err(BuildError::MissingCamera);
    }
    let start = Instant::now();
    let mut grid = TetGrid::init_roots();
    let mut worklist: BTreeSet<(u8, TetId)> = grid.roots().iter().map(|r| (0, *r)).collect();
    let mut criterion_splits = Vec::new();
    while let Some((_, t)) = worklist.pop_first() {
        if !grid.tet(t).is_leaf() || !wants_refinement(&grid, t, vol, cfg, cam) {
            continue;
        }
        let created = grid.refine_conforming(t)?;
        criterion_splits.push(t);
        worklist.extend(created.into_iter().map(|c| (grid.tet(c).level, c)));
    }
    let bisections = (grid.tets().len() - grid.roots().len()) / 2;
    assign_payloads(&mut grid, vol, cfg);
    grid.rebuild_adjacency();
    Ok(BuildOutcome {
        grid,
        forced_splits: bisections - criterion_splits.len(),
        criterion_splits,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Sets every leaf's payload from the voxel means inside it.
pub fn assign_payloads(grid: &mut TetGrid, vol: &DenseVolume, cfg: &BuildConfig) {
    let leaves: Vec<TetId> = grid.leaves().collect();
    let payloads: Vec<MediaPayload> = leaves
        .par_iter()
        .map(|t| leaf_payload(grid, *t, vol, cfg))
        .collect();
    for (t, p) in leaves.into_iter().zip(payloads) {
        grid.set_payload(t, p);
    }
}

fn leaf_payload(grid: &TetGrid, t: TetId, vol: &DenseVolume, cfg: &BuildConfig) -> MediaPayload {
    let geom = grid.geometry(t);
    let density = vol.density_stats_in_tet(&geom).mean * cfg.density_scale;
    let mean_of = |name: &str| {
        vol.channel_stats_in_tet(name, &geom).ok().map(|s| s.mean as f32)
    };
    MediaPayload {
        density: density as f32,
        temperature: mean_of(TEMPERATURE).map(|v| v.max(0.0)),
        albedo: mean_of(ALBEDO).map(|v| v.clamp(0.0, 1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam::DVec3;

    fn step(n: usize) -> DenseVolume {
        DenseVolume::from_fn([n; 3], |p| if p.x < 0.5 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn constant_volume_stays_at_roots() {
        let vol = DenseVolume::constant([8; 3], 3.0).unwrap();
        let cfg = BuildConfig { density_scale: 2.0, ..Default::default() };
        let out = build_adaptive_grid(&vol, &cfg, None).unwrap();
        assert_eq!(out.grid.leaf_count(), 24);
        for t in out.grid.leaves() {
            assert_eq!(out.grid.tet(t).payload.unwrap().density, 6.0);
        }
        assert!(out.grid.validate().is_ok());
    }

    #[test]
    fn step_refines_only_at_the_interface() {
        let vol = step(16);
        let cfg = BuildConfig { variation_threshold: 0.5, max_level: 9, ..Default::default() };
        let out = build_adaptive_grid(&vol, &cfg, None).unwrap();
        let g = &out.grid;
        assert!(g.validate().is_ok());
        assert!(g.leaf_count() > 24);
        assert!(g.leaf_count() < 24 * 8usize.pow(3));
        // Every leaf is either pure or vacuum: the interface is a grid plane.
        for t in g.leaves() {
            let d = g.tet(t).payload.unwrap().density;
            assert!(d == 0.0 || d == 1.0, "mixed leaf density {d}");
        }
    }

    #[test]
    fn ramp_refinement_respects_cap_and_threshold_monotonicity() {
        let vol = DenseVolume::from_fn([16; 3], |p| (0.1 + p.x * p.x) as f32).unwrap();
        let count = |th: f64| {
            let cfg = BuildConfig { variation_threshold: th, max_level: 9, ..Default::default() };
            let out = build_adaptive_grid(&vol, &cfg, None).unwrap();
            assert!(out.grid.depth() <= 10);
            out.grid.leaf_count()
        };
        let counts: Vec<usize> = [2.0, 1.0, 0.5, 0.25].into_iter().map(count).collect();
        for w in counts.windows(2) {
            assert!(w[0] <= w[1], "{counts:?}");
        }
        assert!(counts[3] > counts[0]);
    }

    #[test]
    fn camera_looking_away_keeps_far_side_coarse() {
        let vol = DenseVolume::from_fn([16; 3], |p| (0.1 + p.x + p.y * p.z) as f32).unwrap();
        let cam = PinholeCamera::new(DVec3::new(0.5, 0.5, 0.45), DVec3::Z, DVec3::Y, 60.0, 64, 64).unwrap();
        let cfg = BuildConfig { variation_threshold: 0.05, max_level: 8, use_camera: true, ..Default::default() };
        let out = build_adaptive_grid(&vol, &cfg, Some(&cam)).unwrap();
        for t in &out.criterion_splits {
            assert!(!cam.tet_outside_frustum(&out.grid.geometry(*t)));
        }
        let no_cam = BuildConfig { use_camera: false, ..cfg };
        let full = build_adaptive_grid(&vol, &no_cam, None).unwrap();
        assert!(full.grid.leaf_count() > out.grid.leaf_count());
    }

    #[test]
    fn config_errors() {
        let vol = step(4);
        let bad = BuildConfig { variation_threshold: -1.0, ..Default::default() };
        assert!(matches!(build_adaptive_grid(&vol, &bad, None), Err(BuildError::Config(_))));
        let bad = BuildConfig { max_level: 60, ..Default::default() };
        assert!(matches!(build_adaptive_grid(&vol, &bad, None), Err(BuildError::Config(_))));
        let bad = BuildConfig { pixel_threshold: 0.0, ..Default::default() };
        assert!(matches!(build_adaptive_grid(&vol, &bad, None), Err(BuildError::Config(_))));
        let cam_needed = BuildConfig { use_camera: true, ..Default::default() };
        assert!(matches!(build_adaptive_grid(&vol, &cam_needed, None), Err(BuildError::MissingCamera)));
    }

    #[test]
    fn zero_region_payloads_are_zero() {
        let vol = step(8);
        let cfg = BuildConfig { variation_threshold: 0.5, max_level: 6, density_scale: 3.0, ..Default::default() };
        let out = build_adaptive_grid(&vol, &cfg, None).unwrap();
        for t in out.grid.leaves() {
            let c = out.grid.geometry(t).centroid();
            let d = out.grid.tet(t).payload.unwrap().density;
            if c.x > 0.5 {
                assert_eq!(d, 0.0);
            } else {
                assert_eq!(d, 3.0);
            }
        }
    }

    #[test]
    fn optional_channels_are_averaged() {
        let vol = DenseVolume::constant([4; 3], 1.0)
            .unwrap()
            .with_channel(TEMPERATURE, vec![0.25; 64])
            .unwrap()
            .with_channel(ALBEDO, vec![0.5; 64])
            .unwrap();
        let out = build_adaptive_grid(&vol, &BuildConfig::default(), None).unwrap();
        let p = out.grid.tet(out.grid.roots()[0]).payload.unwrap();
        assert_eq!(p.temperature, Some(0.25));
        assert_eq!(p.albedo, Some(0.5));
    }

    #[test]
    fn build_is_deterministic() {
        let vol = DenseVolume::from_fn([12; 3], |p| ((p - DVec3::splat(0.4)).length() * 3.0) as f32).unwrap();
        let cfg = BuildConfig { variation_threshold: 0.3, max_level: 9, ..Default::default() };
        let a = build_adaptive_grid(&vol, &cfg, None).unwrap();
        let b = build_adaptive_grid(&vol, &cfg, None).unwrap();
        assert_eq!(a.grid.tets(), b.grid.tets());
        assert_eq!(a.grid.vertices(), b.grid.vertices());
    }
}
