//! Monte Carlo volumetric path tracing over any cell [`Medium`].
//!
//! Free paths are sampled by regular tracking, scattering uses the
//! Henyey-Greenstein phase function, lighting is a constant environment seen
//! on escape plus optional temperature-driven emission at collisions.

pub mod emission;
pub mod image;
pub mod march;
pub mod phase;
pub mod rng;

use std::time::Instant;

use glam::DVec3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::PinholeCamera;
use crate::leb_grid::TetGrid;
use crate::ray::Ray;

pub use emission::{emission, EMISSION_RAMP};
pub use image::{read_pfm, ImageAccumulator, PixelStats};
pub use march::{
    exit_face, march_segments, march_transmittance, optical_depth, sample_free_path, CellSpan,
    Degenerate, FreePath, MarchStats, Medium, WalkEnd,
};
pub use phase::{hg_cos_theta, sample_phase_hg};
pub use rng::RngStream;

/// Throughput below which Russian roulette may end a path.
pub const ROULETTE_THRESHOLD: f64 = 1e-3;
/// First bounce at which Russian roulette applies.
pub const ROULETTE_START: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub spp: u32,
    pub max_bounces: u32,
    pub seed: u64,
    pub hg_g: f64,
    /// Used where the medium carries no albedo channel.
    pub default_albedo: f64,
    pub environment: [f64; 3],
    pub emission_scale: f64,
    /// Stops applied before 8-bit encoding.
    pub exposure: f64,
    pub gamma: f64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            spp: 16,
            max_bounces: 16,
            seed: 0,
            hg_g: 0.0,
            default_albedo: 0.8,
            environment: [1.0; 3],
            emission_scale: 1.0,
            exposure: 0.0,
            gamma: 2.2,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid render configuration: {0}")]
pub struct RenderConfigError(pub String);

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderConfigError> {
        let err = |m: String| Err(RenderConfigError(m));
        if self.spp < 1 {
            return err("spp must be at least 1".into());
        }
        if self.max_bounces < 1 {
            return err("max_bounces must be at least 1".into());
        }
        if !(self.hg_g > -1.0 && self.hg_g < 1.0) {
            return err(format!("phase anisotropy g must be in (-1, 1), got {}", self.hg_g));
        }
        if !(0.0..=1.0).contains(&self.default_albedo) {
            return err(format!("albedo must be in [0, 1], got {}", self.default_albedo));
        }
        if self.environment.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return err("environment radiance must be finite and >= 0".into());
        }
        if !(self.emission_scale.is_finite() && self.emission_scale >= 0.0) {
            return err(format!("emission scale must be finite and >= 0, got {}", self.emission_scale));
        }
        if !self.exposure.is_finite() || !(self.gamma > 0.0) {
            return err("exposure must be finite and gamma > 0".into());
        }
        if self.threads == Some(0) {
            return err("thread count must be at least 1".into());
        }
        Ok(())
    }

    pub fn environment(&self) -> DVec3 {
        DVec3::from_array(self.environment)
    }
}

/// Radiance arriving along `ray`. Random numbers are drawn from `rng` in a
/// fixed order per bounce: free path, roulette (when it applies), then the
/// two phase dimensions.
pub fn trace<M: Medium>(
    medium: &M,
    ray: &Ray,
    cfg: &RenderConfig,
    rng: &mut RngStream,
    stats: &mut MarchStats,
) -> DVec3 {
    let env = cfg.environment();
    let mut radiance = DVec3::ZERO;
    let mut throughput = DVec3::ONE;
    let mut ray = *ray;
    let mut cell = None;
    for bounce in 0..cfg.max_bounces {
        let xi = rng.next_f64();
        let (position, payload, hit) = match sample_free_path(medium, &ray, cell, xi, stats) {
            FreePath::Escaped => return radiance + env * throughput,
            FreePath::Aborted => return radiance,
            FreePath::Collision { position, payload, cell, .. } => (position, payload, cell),
        };
        if let Some(temp) = payload.temperature {
            radiance += DVec3::from_array(emission(temp as f64)) * cfg.emission_scale * throughput;
        }
        throughput *= payload.albedo.map_or(cfg.default_albedo, |a| a as f64);
        let max = throughput.max_element();
        if max <= 0.0 {
            return radiance;
        }
        if bounce >= ROULETTE_START && max < ROULETTE_THRESHOLD {
            if rng.next_f64() >= max {
                return radiance;
            }
            throughput /= max;
        }
        let dir = sample_phase_hg(ray.direction, cfg.hg_g, rng.next_f64(), rng.next_f64());
        ray = Ray::new(position, dir);
        cell = Some(hit);
    }
    radiance
}

/// Renders the tetrahedral grid. See [`render_medium`].
pub fn render(grid: &TetGrid, cam: &PinholeCamera, cfg: &RenderConfig) -> ImageAccumulator {
    render_medium(grid, cam, cfg)
}

/// Path traces `spp` jittered samples per pixel. Pixel `(x, y)` uses RNG
/// streams keyed by `(seed, y * width + x, sample)`, so the image does not
/// depend on the thread count.
pub fn render_medium<M: Medium>(medium: &M, cam: &PinholeCamera, cfg: &RenderConfig) -> ImageAccumulator {
    let start = Instant::now();
    let run = || render_rows(medium, cam, cfg);
    let (pixels, stats) = match cfg.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    };
    let mut img = ImageAccumulator::from_pixels(cam.width(), cam.height(), pixels);
    img.cells_visited = stats.cells_visited;
    img.degenerate_paths = stats.degenerate;
    img.paths = cam.width() as u64 * cam.height() as u64 * cfg.spp as u64;
    img.seconds = start.elapsed().as_secs_f64();
    img
}

fn render_rows<M: Medium>(medium: &M, cam: &PinholeCamera, cfg: &RenderConfig) -> (Vec<PixelStats>, MarchStats) {
    let (w, h) = (cam.width(), cam.height());
    let rows: Vec<(Vec<PixelStats>, MarchStats)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut stats = MarchStats::default();
            let row = (0..w)
                .map(|x| {
                    let pixel = y as u64 * w as u64 + x as u64;
                    let mut acc = PixelStats::default();
                    for s in 0..cfg.spp {
                        let mut rng = RngStream::new(cfg.seed, pixel, s as u64);
                        let ray = cam.primary_ray(x, y, rng.next_f64(), rng.next_f64());
                        acc.add(trace(medium, &ray, cfg, &mut rng, &mut stats));
                    }
                    acc
                })
                .collect();
            (row, stats)
        })
        .collect();
    let mut stats = MarchStats::default();
    let mut pixels = Vec::with_capacity(w as usize * h as usize);
    for (row, s) in rows {
        pixels.extend(row);
        stats += s;
    }
    (pixels, stats)
}
