//! Per-pixel running statistics and image encoders.

use std::fs;
use std::io;
use std::path::Path;

use glam::DVec3;

/// Welford running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PixelStats {
    pub mean: DVec3,
    pub m2: DVec3,
    pub count: u32,
}

impl PixelStats {
    #[inline]
    pub fn add(&mut self, x: DVec3) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance per channel (zero below two samples).
    pub fn variance(&self) -> DVec3 {
        if self.count < 2 {
            DVec3::ZERO
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean per channel.
    pub fn std_error(&self) -> DVec3 {
        if self.count == 0 {
            return DVec3::ZERO;
        }
        (self.variance() / self.count as f64).map(f64::sqrt)
    }
}

/// A rendered image together with the counters of the render that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAccumulator {
    width: u32,
    height: u32,
    pixels: Vec<PixelStats>,
    pub cells_visited: u64,
    pub paths: u64,
    pub degenerate_paths: u64,
    pub seconds: f64,
}

impl ImageAccumulator {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![PixelStats::default(); width as usize * height as usize],
            cells_visited: 0,
            paths: 0,
            degenerate_paths: 0,
            seconds: 0.0,
        }
    }

    pub(crate) fn from_pixels(width: u32, height: u32, pixels: Vec<PixelStats>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        Self { width, height, pixels, cells_visited: 0, paths: 0, degenerate_paths: 0, seconds: 0.0 }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major, top row first.
    pub fn pixels(&self) -> &[PixelStats] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> &PixelStats {
        &self.pixels[(y * self.width + x) as usize]
    }

    pub fn add_sample(&mut self, x: u32, y: u32, value: DVec3) {
        self.pixels[(y * self.width + x) as usize].add(value);
    }

    /// Mean radiance per pixel, row-major.
    pub fn means(&self) -> Vec<DVec3> {
        self.pixels.iter().map(|p| p.mean).collect()
    }

    /// Linear 32-bit PFM: `PF`, dimensions, scale `-1` (little-endian), then
    /// RGB triples with the bottom row first.
    pub fn to_pfm_bytes(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 12);
        for row in self.pixels.chunks(self.width as usize).rev() {
            for p in row {
                for c in p.mean.to_array() {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
        out
    }

    /// 8-bit binary PPM after scaling by `2^exposure` and encoding with `1/gamma`.
    pub fn to_ppm_bytes(&self, exposure: f64, gamma: f64) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        let scale = exposure.exp2();
        for p in &self.pixels {
            for c in p.mean.to_array() {
                out.push(encode_8bit(c * scale, gamma));
            }
        }
        out
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_pfm_bytes())
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>, exposure: f64, gamma: f64) -> io::Result<()> {
        fs::write(path, self.to_ppm_bytes(exposure, gamma))
    }
}

/// Tone value in `[0, 255]`; non-finite input maps to 0.
pub fn encode_8bit(linear: f64, gamma: f64) -> u8 {
    if !linear.is_finite() || linear <= 0.0 {
        return 0;
    }
    (linear.min(1.0).powf(1.0 / gamma) * 255.0).round() as u8
}

/// Parses a PFM written by [`ImageAccumulator::to_pfm_bytes`] (or any 3-channel
/// PFM) into top-row-first linear RGB.
pub fn read_pfm(bytes: &[u8]) -> Result<(u32, u32, Vec<DVec3>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    pos += 1;
    if fields[0] != "PF" {
        return Err(format!("unsupported PFM type {:?}", fields[0]));
    }
    let w: u32 = fields[1].parse().map_err(|_| "bad PFM width")?;
    let h: u32 = fields[2].parse().map_err(|_| "bad PFM height")?;
    let scale: f64 = fields[3].parse().map_err(|_| "bad PFM scale")?;
    let n = w as usize * h as usize;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != n * 12 {
        return Err(format!("PFM payload has {} bytes, expected {}", data.len(), n * 12));
    }
    let value = |i: usize| {
        let b: [u8; 4] = data[i * 4..i * 4 + 4].try_into().unwrap();
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        v as f64
    };
    let mut out = vec![DVec3::ZERO; n];
    for y in 0..h as usize {
        let src_row = h as usize - 1 - y;
        for x in 0..w as usize {
            let i = (src_row * w as usize + x) * 3;
            out[y * w as usize + x] = DVec3::new(value(i), value(i + 1), value(i + 2));
        }
    }
    Ok((w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, 7.0, -1.0];
        let mut p = PixelStats::default();
        for x in xs {
            p.add(DVec3::splat(x));
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((p.mean.x - mean).abs() < 1e-12);
        assert!((p.variance().y - var).abs() < 1e-12);
        assert!((p.std_error().z - (var / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pfm_round_trip_and_row_order() {
        let mut img = ImageAccumulator::new(2, 2);
        img.add_sample(0, 0, DVec3::new(1.0, 0.0, 0.0));
        img.add_sample(1, 1, DVec3::new(0.0, 0.5, 0.25));
        let bytes = img.to_pfm_bytes();
        assert!(bytes.starts_with(b"PF\n2 2\n-1.0\n"));
        let (w, h, px) = read_pfm(&bytes).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(px, img.means());
        // bottom row first: (0, 1) then (1, 1)
        assert_eq!(&bytes[12..24], &[0u8; 12]);
        assert_eq!(&bytes[28..32], &0.5f32.to_le_bytes());
    }

    #[test]
    fn ppm_encoding() {
        assert_eq!(encode_8bit(1.0, 2.2), 255);
        assert_eq!(encode_8bit(5.0, 2.2), 255);
        assert_eq!(encode_8bit(0.0, 2.2), 0);
        assert_eq!(encode_8bit(f64::NAN, 2.2), 0);
        assert_eq!(encode_8bit(0.5f64.powf(2.2), 2.2), 128);
        let mut img = ImageAccumulator::new(1, 1);
        img.add_sample(0, 0, DVec3::splat(0.25));
        let ppm = img.to_ppm_bytes(1.0, 1.0);
        assert_eq!(ppm, b"P6\n1 1\n255\n\x80\x80\x80".to_vec());
    }
}
