//! `.tgrid` serialization.
//!
//! Little-endian layout: magic `TGRD`, version `u32`, vertex count `u64`
//! followed by `3 x u32` fixed-point coordinates per vertex, tet count `u64`
//! followed by one record per tet, then the 24 root ids as `u64`. A tet record
//! holds `4 x u32` vertex ids, `u8` level, `2 x u64` children, `u64` parent,
//! `4 x u64` neighbors, `4 x u8` normal ids, a `u8` payload flag and three
//! `f32` payload values (density, temperature, albedo; NaN marks an absent
//! optional channel). Missing ids are written as `u64::MAX`.

use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::MediaPayload;
use crate::leb_grid::{
    FaceNormalId, GridError, Tet, TetGrid, TetId, Vertex, VertexId, DEFAULT_MAX_LEVEL, ROOT_COUNT,
};

pub const TGRID_MAGIC: &[u8; 4] = b"TGRD";
pub const TGRID_VERSION: u32 = 1;
const NONE: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum GridFormatError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error("grid file is inconsistent: {0}")]
    Grid(#[from] GridError),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, GridFormatError> {
    Err(GridFormatError::Format(msg.into()))
}

pub fn save_grid(grid: &TetGrid, path: impl AsRef<Path>) -> Result<(), GridFormatError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_grid(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<TetGrid, GridFormatError> {
    let bytes = fs::read(path)?;
    read_grid(&mut bytes.as_slice())
}

fn id_or_none(id: Option<TetId>) -> u64 {
    id.map_or(NONE, |t| t.0 as u64)
}

pub fn write_grid(grid: &TetGrid, w: &mut impl Write) -> Result<(), GridFormatError> {
    w.write_all(TGRID_MAGIC)?;
    w.write_all(&TGRID_VERSION.to_le_bytes())?;
    w.write_all(&(grid.vertices().len() as u64).to_le_bytes())?;
    for v in grid.vertices() {
        for c in v.pos {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.write_all(&(grid.tets().len() as u64).to_le_bytes())?;
    for t in grid.tets() {
        for v in t.verts {
            w.write_all(&v.0.to_le_bytes())?;
        }
        w.write_all(&[t.level])?;
        let [c0, c1] = t.children.map_or([None, None], |[a, b]| [Some(a), Some(b)]);
        w.write_all(&id_or_none(c0).to_le_bytes())?;
        w.write_all(&id_or_none(c1).to_le_bytes())?;
        w.write_all(&id_or_none(t.parent).to_le_bytes())?;
        for n in t.neighbors {
            w.write_all(&id_or_none(n).to_le_bytes())?;
        }
        w.write_all(&t.normals.map(|n| n.index()))?;
        match t.payload {
            Some(p) => {
                w.write_all(&[1])?;
                w.write_all(&p.density.to_le_bytes())?;
                w.write_all(&p.temperature.unwrap_or(f32::NAN).to_le_bytes())?;
                w.write_all(&p.albedo.unwrap_or(f32::NAN).to_le_bytes())?;
            }
            None => {
                w.write_all(&[0])?;
                w.write_all(&[0u8; 12])?;
            }
        }
    }
    for r in grid.roots() {
        w.write_all(&(r.0 as u64).to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], GridFormatError> {
        let mut out = [0u8; N];
        self.buf
            .read_exact(&mut out)
            .map_err(|_| GridFormatError::Format(format!("truncated while reading {what}")))?;
        Ok(out)
    }
    fn u8(&mut self, what: &str) -> Result<u8, GridFormatError> {
        Ok(self.take::<1>(what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32, GridFormatError> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64, GridFormatError> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32, GridFormatError> {
        Ok(f32::from_le_bytes(self.take(what)?))
    }
    fn tet_id(&mut self, what: &str, count: u64) -> Result<Option<TetId>, GridFormatError> {
        match self.u64(what)? {
            NONE => Ok(None),
            id if id < count => Ok(Some(TetId(id as u32))),
            id => format_err(format!("{what} id {id} out of range")),
        }
    }
}

/// Smallest encoded tet record, used to reject absurd counts before allocating.
const TET_RECORD_BYTES: u64 = 16 + 1 + 16 + 8 + 32 + 4 + 1 + 12;

pub fn read_grid(input: &mut &[u8]) -> Result<TetGrid, GridFormatError> {
    let mut r = Reader { buf: input };
    if &r.take::<4>("magic")? != TGRID_MAGIC {
        return format_err("bad magic");
    }
    let version = r.u32("version")?;
    if version != TGRID_VERSION {
        return format_err(format!("unsupported version {version}"));
    }
    let nv = r.u64("vertex count")?;
    if nv.saturating_mul(12) > r.buf.len() as u64 {
        return format_err("vertex count exceeds file size");
    }
    let mut vertices = Vec::with_capacity(nv as usize);
    for _ in 0..nv {
        vertices.push(Vertex::new(r.u32("vertex")?, r.u32("vertex")?, r.u32("vertex")?));
    }
    let nt = r.u64("tet count")?;
    if nt.saturating_mul(TET_RECORD_BYTES) > r.buf.len() as u64 || nt > u32::MAX as u64 {
        return format_err("tet count exceeds file size");
    }
    let mut tets = Vec::with_capacity(nt as usize);
    for i in 0..nt {
        let mut verts = [VertexId(0); 4];
        for v in &mut verts {
            let id = r.u32("tet vertex")?;
            if id as u64 >= nv {
                return format_err(format!("tet {i} vertex id {id} out of range"));
            }
            *v = VertexId(id);
        }
        let level = r.u8("level")?;
        if level > DEFAULT_MAX_LEVEL {
            return format_err(format!("tet {i} level {level} above the cap"));
        }
        let c0 = r.tet_id("child", nt)?;
        let c1 = r.tet_id("child", nt)?;
        let children = match (c0, c1) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => return format_err(format!("tet {i} has exactly one child")),
        };
        let parent = r.tet_id("parent", nt)?;
        let mut neighbors = [None; 4];
        for n in &mut neighbors {
            *n = r.tet_id("neighbor", nt)?;
        }
        let mut normals = [FaceNormalId::default(); 4];
        for n in &mut normals {
            let raw = r.u8("normal id")?;
            *n = FaceNormalId::new(raw)
                .ok_or_else(|| GridFormatError::Format(format!("tet {i} normal id {raw}")))?;
        }
        let present = r.u8("payload flag")?;
        let density = r.f32("payload")?;
        let temperature = r.f32("payload")?;
        let albedo = r.f32("payload")?;
        let payload = match present {
            0 => None,
            1 => Some(MediaPayload {
                density,
                temperature: (!temperature.is_nan()).then_some(temperature),
                albedo: (!albedo.is_nan()).then_some(albedo),
            }),
            other => return format_err(format!("tet {i} payload flag {other}")),
        };
        tets.push(Tet { verts, level, parent, children, neighbors, payload, normals });
    }
    let mut roots = [TetId(0); ROOT_COUNT];
    for root in &mut roots {
        *root = r
            .tet_id("root", nt)?
            .ok_or_else(|| GridFormatError::Format("missing root id".into()))?;
    }
    if !r.buf.is_empty() {
        return format_err(format!("{} trailing bytes", r.buf.len()));
    }
    *input = r.buf;
    Ok(TetGrid::from_parts(vertices, tets, roots, DEFAULT_MAX_LEVEL)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(g: &TetGrid) -> Vec<u8> {
        let mut out = Vec::new();
        write_grid(g, &mut out).unwrap();
        out
    }

    #[test]
    fn root_grid_round_trip() {
        let g = TetGrid::init_roots();
        let b = bytes(&g);
        let back = read_grid(&mut b.as_slice()).unwrap();
        assert_eq!(back.tets(), g.tets());
        assert_eq!(back.vertices(), g.vertices());
        assert_eq!(back.roots(), g.roots());
        assert_eq!(bytes(&back), b);
        assert!(back.validate().is_ok());
    }

    #[test]
    fn payloads_survive() {
        let mut g = TetGrid::init_roots();
        g.refine_uniform(2).unwrap();
        for (i, t) in g.leaves().collect::<Vec<_>>().into_iter().enumerate() {
            let p = MediaPayload {
                density: i as f32 * 0.5,
                temperature: (i % 2 == 0).then_some(i as f32),
                albedo: (i % 3 == 0).then_some(0.25),
            };
            g.set_payload(t, p);
        }
        let b = bytes(&g);
        let back = read_grid(&mut b.as_slice()).unwrap();
        assert_eq!(back.tets(), g.tets());
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let g = TetGrid::init_roots();
        let b = bytes(&g);
        for cut in [3, 20, b.len() / 2, b.len() - 1] {
            assert!(matches!(
                read_grid(&mut &b[..cut]),
                Err(GridFormatError::Format(_))
            ));
        }
        let mut bad = b.clone();
        bad[1] = b'X';
        assert!(matches!(read_grid(&mut bad.as_slice()), Err(GridFormatError::Format(_))));
        let mut ver = b.clone();
        ver[4] = 9;
        assert!(matches!(read_grid(&mut ver.as_slice()), Err(GridFormatError::Format(_))));
    }
}
