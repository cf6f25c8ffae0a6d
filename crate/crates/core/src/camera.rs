//! Pinhole camera: primary rays plus the view-dependent refinement tests.

use glam::DVec3;

use crate::leb_grid::TetGeometry;
use crate::ray::Ray;

/// Distance of the near plane, and the floor on camera-to-cell distances.
pub const NEAR_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    position: DVec3,
    forward: DVec3,
    up: DVec3,
    right: DVec3,
    vfov_degrees: f64,
    width: u32,
    height: u32,
    tan_half: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("vertical field of view must be in (0, 180), got {0}")]
    FieldOfView(f64),
    #[error("image resolution must be at least 1x1, got {0}x{1}")]
    Resolution(u32, u32),
    #[error("forward and up directions are degenerate")]
    Basis,
}

impl PinholeCamera {
    /// Camera at `position` looking along `forward`; `up` is re-orthogonalised.
    pub fn new(
        position: DVec3,
        forward: DVec3,
        up: DVec3,
        vfov_degrees: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        if !(vfov_degrees > 0.0 && vfov_degrees < 180.0) {
            return Err(CameraError::FieldOfView(vfov_degrees));
        }
        if width == 0 || height == 0 {
            return Err(CameraError::Resolution(width, height));
        }
        let forward = forward.try_normalize().ok_or(CameraError::Basis)?;
        let right = forward.cross(up).try_normalize().ok_or(CameraError::Basis)?;
        let up = right.cross(forward);
        Ok(Self {
            position,
            forward,
            up,
            right,
            vfov_degrees,
            width,
            height,
            tan_half: (vfov_degrees.to_radians() * 0.5).tan(),
        })
    }

    pub fn look_at(
        position: DVec3,
        target: DVec3,
        up: DVec3,
        vfov_degrees: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        Self::new(position, target - position, up, vfov_degrees, width, height)
    }

    pub fn position(&self) -> DVec3 {
        self.position
    }
    pub fn forward(&self) -> DVec3 {
        self.forward
    }
    pub fn up(&self) -> DVec3 {
        self.up
    }
    pub fn vfov_degrees(&self) -> f64 {
        self.vfov_degrees
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// Ray through pixel `(px, py)` offset by the jitter `(jx, jy)` in `[0, 1)`.
    /// Pixel `(0, 0)` is the top-left corner of the image.
    pub fn primary_ray(&self, px: u32, py: u32, jx: f64, jy: f64) -> Ray {
        let sx = ((px as f64 + jx) / self.width as f64) * 2.0 - 1.0;
        let sy = 1.0 - ((py as f64 + jy) / self.height as f64) * 2.0;
        let dir = self.forward
            + self.right * (sx * self.tan_half * self.aspect())
            + self.up * (sy * self.tan_half);
        Ray::new(self.position, dir)
    }

    /// Inward-facing normals of the near plane and the four side planes, with
    /// the plane offset `n . x` for each.
    fn frustum_planes(&self) -> [(DVec3, f64); 5] {
        let a = self.tan_half * self.aspect();
        let b = self.tan_half;
        let sides = [
            self.forward * a - self.right,
            self.forward * a + self.right,
            self.forward * b - self.up,
            self.forward * b + self.up,
        ];
        let near = (self.forward, self.forward.dot(self.position) + NEAR_EPSILON);
        let mut out = [near; 5];
        for (o, n) in out[1..].iter_mut().zip(sides) {
            *o = (n, n.dot(self.position));
        }
        out
    }

    /// True only when every vertex lies strictly outside one common plane of
    /// the frustum (near plane plus four sides; there is no far plane).
    pub fn tet_outside_frustum(&self, tet: &TetGeometry) -> bool {
        let pts = tet.verts.map(|v| v.to_dvec3());
        self.frustum_planes()
            .iter()
            .any(|(n, off)| pts.iter().all(|p| n.dot(*p) < *off))
    }

    /// Whether a point is in front of the near plane and projects inside the image.
    pub fn sees_point(&self, p: DVec3) -> bool {
        self.frustum_planes().iter().all(|(n, off)| n.dot(p) >= *off)
    }

    /// Approximate screen-space extent of a cell in pixels: longest edge
    /// divided by the full view height at the centroid distance.
    /// Infinite when the camera is inside the cell's bounding sphere.
    pub fn projected_size_pixels(&self, tet: &TetGeometry) -> f64 {
        let centroid = tet.centroid();
        let radius = tet
            .verts
            .iter()
            .map(|v| v.to_dvec3().distance(centroid))
            .fold(0.0, f64::max);
        let dist = self.position.distance(centroid);
        if dist <= radius {
            return f64::INFINITY;
        }
        projected_size(tet.longest_edge(), dist, self.vfov_degrees, self.height)
    }
}

/// `L / (2 d tan(vfov / 2)) * height`, with `d` floored at [`NEAR_EPSILON`].
pub fn projected_size(longest_edge: f64, distance: f64, vfov_degrees: f64, height: u32) -> f64 {
    let d = distance.max(NEAR_EPSILON);
    longest_edge / (2.0 * d * (vfov_degrees.to_radians() * 0.5).tan()) * height as f64
}
