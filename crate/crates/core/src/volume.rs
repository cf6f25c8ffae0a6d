//! Dense voxel volumes mapped onto the unit control cube.
//!
//! Voxel `(i, j, k)` of an `nx * ny * nz` volume has its center at
//! `((i + 0.5) / nx, (j + 0.5) / ny, (k + 0.5) / nz)`. Values are stored
//! x-fastest, then y, then z.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use glam::DVec3;
use thiserror::Error;

use crate::leb_grid::{TetGeometry, FACE_VERTS, FIXED_ONE};

pub const DVOL_MAGIC: &[u8; 4] = b"DVOL";
pub const DVOL_VERSION: u32 = 1;
/// Largest supported resolution per axis; keeps the exact voxel-in-tet test in `i128`.
pub const MAX_AXIS_RESOLUTION: usize = 4096;

pub const DENSITY: &str = "density";
pub const TEMPERATURE: &str = "temperature";
pub const ALBEDO: &str = "albedo";

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a dense volume file (bad magic)")]
    BadMagic,
    #[error("unsupported dense volume version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(&'static str),
    #[error("volume dimensions must be positive, got {0:?}")]
    ZeroDims([usize; 3]),
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
}

impl VolumeError {
    /// True for errors caused by malformed file contents.
    pub fn is_parse_error(&self) -> bool {
        !matches!(self, VolumeError::Io(_) | VolumeError::UnknownChannel(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseVolume {
    dims: [usize; 3],
    channels: Vec<Channel>,
}

/// Aggregate of the voxel values whose centers fall inside a tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Number of voxel centers inside; 0 means the values come from the centroid fallback.
    pub count: usize,
}

impl DensityStats {
    pub fn uniform(value: f64) -> Self {
        Self { min: value, max: value, mean: value, count: 0 }
    }

    pub fn variation(&self) -> f64 {
        variation_metric(self)
    }
}

/// Relative spread `(max - min) / mean`; zero for an empty (all-zero) cell.
pub fn variation_metric(stats: &DensityStats) -> f64 {
    if stats.mean == 0.0 {
        0.0
    } else {
        (stats.max - stats.min) / stats.mean
    }
}

impl DenseVolume {
    pub fn new(dims: [usize; 3], channels: Vec<Channel>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::ZeroDims(dims));
        }
        if dims.iter().any(|&n| n > MAX_AXIS_RESOLUTION) {
            return Err(VolumeError::Invalid(format!(
                "resolution {dims:?} exceeds {MAX_AXIS_RESOLUTION} per axis"
            )));
        }
        let len = dims[0] * dims[1] * dims[2];
        for c in &channels {
            if c.data.len() != len {
                return Err(VolumeError::Invalid(format!(
                    "channel {:?} has {} values, expected {len}",
                    c.name,
                    c.data.len()
                )));
            }
            if c.name.len() > u8::MAX as usize || !c.name.is_ascii() {
                return Err(VolumeError::Invalid(format!("bad channel name {:?}", c.name)));
            }
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(VolumeError::Invalid(format!("duplicate channel {:?}", c.name)));
            }
        }
        let density = channels
            .iter()
            .find(|c| c.name == DENSITY)
            .ok_or_else(|| VolumeError::Invalid("missing density channel".into()))?;
        if let Some(bad) = density.data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(VolumeError::Invalid(format!("negative or non-finite density {bad}")));
        }
        Ok(Self { dims, channels })
    }

    /// Density-only volume sampled from `f` at voxel centers.
    pub fn from_fn(dims: [usize; 3], f: impl Fn(DVec3) -> f32) -> Result<Self, VolumeError> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(voxel_center(dims, [i, j, k])));
                }
            }
        }
        Self::new(dims, vec![Channel { name: DENSITY.into(), data }])
    }

    pub fn constant(dims: [usize; 3], value: f32) -> Result<Self, VolumeError> {
        Self::from_fn(dims, |_| value)
    }

    /// Adds or replaces a channel.
    pub fn with_channel(mut self, name: &str, data: Vec<f32>) -> Result<Self, VolumeError> {
        let mut channels = std::mem::take(&mut self.channels);
        channels.retain(|c| c.name != name);
        channels.push(Channel { name: name.into(), data });
        Self::new(self.dims, channels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f32]> {
        self.channels.iter().find(|c| c.name == name).map(|c| c.data.as_slice())
    }

    pub fn density(&self) -> &[f32] {
        self.channel(DENSITY).expect("validated on construction")
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    // -- file format ---------------------------------------------------------

    pub fn load_dvol(path: impl AsRef<Path>) -> Result<Self, VolumeError> {
        let bytes = fs::read(path)?;
        Self::from_dvol_bytes(&bytes)
    }

    pub fn save_dvol(&self, path: impl AsRef<Path>) -> Result<(), VolumeError> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        f.write_all(&self.to_dvol_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn to_dvol_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.voxel_count() * self.channels.len());
        out.extend_from_slice(DVOL_MAGIC);
        out.extend_from_slice(&DVOL_VERSION.to_le_bytes());
        for n in self.dims {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        for c in &self.channels {
            out.push(c.name.len() as u8);
            out.extend_from_slice(c.name.as_bytes());
        }
        for c in &self.channels {
            for v in &c.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_dvol_bytes(bytes: &[u8]) -> Result<Self, VolumeError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| VolumeError::Truncated("magic"))?;
        if &magic != DVOL_MAGIC {
            return Err(VolumeError::BadMagic);
        }
        let version = read_u32(&mut r, "version")?;
        if version != DVOL_VERSION {
            return Err(VolumeError::UnsupportedVersion(version));
        }
        let dims = [
            read_u32(&mut r, "dims")? as usize,
            read_u32(&mut r, "dims")? as usize,
            read_u32(&mut r, "dims")? as usize,
        ];
        if dims.contains(&0) {
            return Err(VolumeError::ZeroDims(dims));
        }
        if dims.iter().any(|&n| n > MAX_AXIS_RESOLUTION) {
            return Err(VolumeError::Invalid(format!("resolution {dims:?} too large")));
        }
        let count = read_u32(&mut r, "channel count")? as usize;
        let mut names = Vec::with_capacity(count.min(256));
        for _ in 0..count {
            let mut len = [0u8; 1];
            r.read_exact(&mut len).map_err(|_| VolumeError::Truncated("channel name"))?;
            let mut name = vec![0u8; len[0] as usize];
            r.read_exact(&mut name).map_err(|_| VolumeError::Truncated("channel name"))?;
            let name = String::from_utf8(name)
                .map_err(|_| VolumeError::Invalid("channel name is not ASCII".into()))?;
            names.push(name);
        }
        let len = dims[0] * dims[1] * dims[2];
        if r.len() < len * 4 * count {
            return Err(VolumeError::Truncated("channel payload"));
        }
        let mut channels = Vec::with_capacity(count);
        for name in names {
            let (head, rest) = r.split_at(len * 4);
            let data = head
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            r = rest;
            channels.push(Channel { name, data });
        }
        if !r.is_empty() {
            return Err(VolumeError::Invalid(format!("{} trailing bytes", r.len())));
        }
        Self::new(dims, channels)
    }

    // -- sampling ------------------------------------------------------------

    /// Trilinear interpolation between voxel centers, clamped to the edge voxels.
    pub fn trilinear_sample(&self, p: DVec3, channel: &str) -> Result<f64, VolumeError> {
        let data = self
            .channel(channel)
            .ok_or_else(|| VolumeError::UnknownChannel(channel.into()))?;
        Ok(self.trilinear(data, p))
    }

    fn trilinear(&self, data: &[f32], p: DVec3) -> f64 {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut w = [0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let u = (p[a] * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n.saturating_sub(2));
            lo[a] = i;
            hi[a] = (i + 1).min(n - 1);
            w[a] = if hi[a] == lo[a] { 0.0 } else { u - i as f64 };
        }
        let v = |i: usize, j: usize, k: usize| data[self.index(i, j, k)] as f64;
        let mut acc = 0.0;
        for (k, wk) in [(lo[2], 1.0 - w[2]), (hi[2], w[2])] {
            for (j, wj) in [(lo[1], 1.0 - w[1]), (hi[1], w[1])] {
                for (i, wi) in [(lo[0], 1.0 - w[0]), (hi[0], w[0])] {
                    let wt = wi * wj * wk;
                    if wt != 0.0 {
                        acc += wt * v(i, j, k);
                    }
                }
            }
        }
        acc
    }

    /// Statistics of the density values whose voxel centers lie in `tet`.
    pub fn density_stats_in_tet(&self, tet: &TetGeometry) -> DensityStats {
        self.stats_in_tet(self.density(), tet)
    }

    pub fn channel_stats_in_tet(
        &self,
        channel: &str,
        tet: &TetGeometry,
    ) -> Result<DensityStats, VolumeError> {
        let data = self
            .channel(channel)
            .ok_or_else(|| VolumeError::UnknownChannel(channel.into()))?;
        Ok(self.stats_in_tet(data, tet))
    }

    fn stats_in_tet(&self, data: &[f32], tet: &TetGeometry) -> DensityStats {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        self.for_each_voxel_in_tet(tet, |idx| {
            let v = data[idx] as f64;
            min = min.min(v);
            max = max.max(v);
            sum += v;
            count += 1;
        });
        if count == 0 {
            DensityStats::uniform(self.trilinear(data, tet.centroid()))
        } else {
            DensityStats { min, max, mean: sum / count as f64, count }
        }
    }

    /// Calls `visit` with the linear index of every voxel whose center is
    /// inside `tet`, using an exact integer test.
    pub fn for_each_voxel_in_tet(&self, tet: &TetGeometry, mut visit: impl FnMut(usize)) {
        let test = ExactTet::new(self.dims, tet);
        let mut range = [(0usize, 0usize); 3];
        for (a, r) in range.iter_mut().enumerate() {
            let n = self.dims[a] as f64;
            let lo = tet.verts.iter().map(|v| v.pos[a]).min().unwrap() as f64 / FIXED_ONE as f64;
            let hi = tet.verts.iter().map(|v| v.pos[a]).max().unwrap() as f64 / FIXED_ONE as f64;
            let first = ((lo * n - 0.5).ceil() - 1.0).max(0.0) as usize;
            let last = ((hi * n - 0.5).floor() + 1.0).min(n - 1.0);
            if last < 0.0 {
                return;
            }
            *r = (first, last as usize);
        }
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    if test.contains([i, j, k]) {
                        visit(self.index(i, j, k));
                    }
                }
            }
        }
    }
}

pub fn voxel_center(dims: [usize; 3], ijk: [usize; 3]) -> DVec3 {
    DVec3::new(
        (ijk[0] as f64 + 0.5) / dims[0] as f64,
        (ijk[1] as f64 + 0.5) / dims[1] as f64,
        (ijk[2] as f64 + 0.5) / dims[2] as f64,
    )
}

fn read_u32(r: &mut &[u8], what: &'static str) -> Result<u32, VolumeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| VolumeError::Truncated(what))?;
    Ok(u32::from_le_bytes(b))
}

/// Point-in-tet for voxel centers in exact integer arithmetic.
///
/// Axis `a` is scaled by `2 * n_a * 2^24`, which maps both fixed-point
/// vertices and voxel centers `(2i + 1) / (2 n_a)` onto integers. Positive
/// per-axis scaling preserves orientation signs.
struct ExactTet {
    planes: [([i128; 3], [i128; 3], bool); 4],
}

impl ExactTet {
    fn new(dims: [usize; 3], tet: &TetGeometry) -> Self {
        let scaled = tet.verts.map(|v| {
            [0, 1, 2].map(|a| v.pos[a] as i128 * 2 * dims[a] as i128)
        });
        let planes = std::array::from_fn(|f| {
            let [a, b, c] = FACE_VERTS[f].map(|s| scaled[s]);
            let u = sub(b, a);
            let w = sub(c, a);
            let mut n = cross(u, w);
            let d = sub(scaled[f], a);
            if dot(n, d) < 0 {
                n = n.map(|x| -x);
            }
            (n, a, tet.open_faces[f])
        });
        Self { planes }
    }

    fn contains(&self, ijk: [usize; 3]) -> bool {
        let p = ijk.map(|i| (2 * i as i128 + 1) * FIXED_ONE as i128);
        self.planes.iter().all(|(n, a, open)| {
            let s = dot(*n, sub(p, *a));
            if *open {
                s > 0
            } else {
                s >= 0
            }
        })
    }
}

fn sub(a: [i128; 3], b: [i128; 3]) -> [i128; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [i128; 3], b: [i128; 3]) -> [i128; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [i128; 3], b: [i128; 3]) -> i128 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
