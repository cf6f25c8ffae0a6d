//! Procedural test volumes on an `n^3` grid, evaluated at voxel centers `p`.
//!
//! | kind       | density                                                   |
//! |------------|-----------------------------------------------------------|
//! | `constant` | `1`                                                       |
//! | `ramp`     | `p.x`                                                     |
//! | `blob`     | `(1 - r^2 / R^2)^2` for `r < R`, else `0`; `r = |p - c|`, `c = (0.5, 0.5, 0.5)`, `R = 0.4` |
//! | `step`     | `1` where `p.x < 0.5`, else `0`                           |
//! | `noise`    | value noise, 3 octaves from lattice 4, seed 0x5eed, clamped to `>= 0` |

use glam::DVec3;
use tetvol_core::tracer::rng::uniform;
use tetvol_core::volume::VolumeError;
use tetvol_core::DenseVolume;

pub const BLOB_RADIUS: f64 = 0.4;
pub const NOISE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Constant,
    Ramp,
    Blob,
    Step,
    Noise,
}

pub fn density(kind: Kind, p: DVec3) -> f64 {
    match kind {
        Kind::Constant => 1.0,
        Kind::Ramp => p.x,
        Kind::Blob => {
            let q = (p - DVec3::splat(0.5)).length_squared() / (BLOB_RADIUS * BLOB_RADIUS);
            if q < 1.0 {
                (1.0 - q) * (1.0 - q)
            } else {
                0.0
            }
        }
        Kind::Step => {
            if p.x < 0.5 {
                1.0
            } else {
                0.0
            }
        }
        Kind::Noise => {
            let mut sum = 0.0;
            let mut amp = 1.0;
            let mut freq = 4.0;
            for octave in 0..3 {
                sum += amp * value_noise(p * freq, octave);
                amp *= 0.5;
                freq *= 2.0;
            }
            (sum / 1.75).max(0.0)
        }
    }
}

fn lattice(i: [i64; 3], octave: u64) -> f64 {
    let key = (i[0] as u64 & 0x1f_ffff) | (i[1] as u64 & 0x1f_ffff) << 21 | (i[2] as u64 & 0x1f_ffff) << 42;
    uniform(NOISE_SEED, key, octave, 0)
}

/// Smoothstep-interpolated lattice values in `[0, 1)`.
fn value_noise(p: DVec3, octave: u64) -> f64 {
    let base = p.floor();
    let f = p - base;
    let s = f * f * (DVec3::splat(3.0) - 2.0 * f);
    let b = [base.x as i64, base.y as i64, base.z as i64];
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { s.x } else { 1.0 - s.x })
                    * (if dy == 1 { s.y } else { 1.0 - s.y })
                    * (if dz == 1 { s.z } else { 1.0 - s.z });
                acc += w * lattice([b[0] + dx, b[1] + dy, b[2] + dz], octave);
            }
        }
    }
    acc
}

pub fn generate(kind: Kind, n: usize) -> Result<DenseVolume, VolumeError> {
    DenseVolume::from_fn([n; 3], |p| density(kind, p) as f32)
}
