//! Henyey-Greenstein phase function sampling.

use glam::DVec3;

/// Scattering cosine for uniform `xi` in `[0, 1)`.
pub fn hg_cos_theta(g: f64, xi: f64) -> f64 {
    if g.abs() < 1e-6 {
        return 1.0 - 2.0 * xi;
    }
    let s = (1.0 - g * g) / (1.0 + g * (2.0 * xi - 1.0));
    ((1.0 + g * g - s * s) / (2.0 * g)).clamp(-1.0, 1.0)
}

/// New unit direction around `dir` with cosine from [`hg_cos_theta`] and
/// azimuth `2 pi xi2`.
pub fn sample_phase_hg(dir: DVec3, g: f64, xi1: f64, xi2: f64) -> DVec3 {
    let cos_t = hg_cos_theta(g, xi1);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * xi2;
    let (u, v) = dir.any_orthonormal_pair();
    (u * (sin_t * phi.cos()) + v * (sin_t * phi.sin()) + dir * cos_t).normalize()
}

/// Henyey-Greenstein density over solid angle.
pub fn hg_pdf(g: f64, cos_t: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_t;
    (1.0 - g * g) / (4.0 * std::f64::consts::PI * denom * denom.sqrt())
}
