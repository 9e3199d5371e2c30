//! `SRFG` feature grid files.
//!
//! ```text
//! "SRFG" | u32 version = 1 | u32 grid_h | u32 grid_w | u32 dim | u32 normalized (0/1)
//! f32 x grid_h*grid_w*dim, row-major
//! ```

use std::path::Path;

use patchground_core::FeatureGrid;

use super::bytes::{put_f32s, put_u32, Cursor};
use super::{read_file, write_file, FormatError, Result};

pub const MAGIC: &str = "SRFG";
pub const VERSION: u32 = 1;

pub fn encode_feature_grid(grid: &FeatureGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + grid.data().len() * 4);
    out.extend_from_slice(MAGIC.as_bytes());
    put_u32(&mut out, VERSION);
    put_u32(&mut out, grid.grid_h() as u32);
    put_u32(&mut out, grid.grid_w() as u32);
    put_u32(&mut out, grid.dim() as u32);
    put_u32(&mut out, u32::from(grid.is_normalized()));
    put_f32s(&mut out, grid.data());
    out
}

pub fn decode_feature_grid(bytes: &[u8]) -> Result<FeatureGrid> {
    let mut c = Cursor::new(bytes);
    c.magic(MAGIC)?;
    let version = c.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let (h, w, dim) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let normalized = match c.u32()? {
        0 => false,
        1 => true,
        v => return Err(FormatError::Malformed(format!("normalized flag is {v}"))),
    };
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| FormatError::DimMismatch("grid size overflows".into()))?;
    let data = c.f32s(n)?;
    c.finish()?;
    Ok(FeatureGrid::new(h, w, dim, data, normalized)?)
}

pub fn read_feature_grid(path: &Path) -> Result<FeatureGrid> {
    decode_feature_grid(&read_file(path)?)
}

pub fn write_feature_grid(grid: &FeatureGrid, path: &Path) -> Result<()> {
    write_file(path, &encode_feature_grid(grid))
}
