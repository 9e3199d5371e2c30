//! `SRBK` refined class bank files.
//!
//! ```text
//! "SRBK" | u32 version = 1
//! str class_name | u32 dim | u32 n_entries
//! f32 tau_b | f32 tau_t | f32 xi | u32 eta_min | u32 n_s | u32 k
//! f32 kappa_lo | f32 kappa_hi | f32 scale
//! u8 kappa_mode (0 = adaptive Q75, linear interpolation; 1 = fixed) | f32 kappa_fixed
//! u8 fallback_used | f32 kappa_c
//! n_entries x { str source_image_id | u32 patch_flat_index | f32 score | f32 x dim }
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use patchground_core::{BankVector, BuildRecord, ClassBank, IccdParams, KappaMode};

use super::bytes::{put_f32, put_f32s, put_str, put_u32, Cursor};
use super::{read_file, write_file, FormatError, Result};

pub const MAGIC: &str = "SRBK";
pub const VERSION: u32 = 1;

pub fn encode_bank(bank: &ClassBank) -> Result<Vec<u8>> {
    bank.validate()?;
    let p = &bank.record.params;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    put_u32(&mut out, VERSION);
    put_str(&mut out, &bank.class_name);
    put_u32(&mut out, bank.dim as u32);
    put_u32(&mut out, bank.entries.len() as u32);
    put_f32(&mut out, p.tau_b);
    put_f32(&mut out, p.tau_t);
    put_f32(&mut out, p.xi);
    put_u32(&mut out, p.eta_min);
    put_u32(&mut out, p.n_s as u32);
    put_u32(&mut out, p.k as u32);
    put_f32(&mut out, p.kappa_lo);
    put_f32(&mut out, p.kappa_hi);
    put_f32(&mut out, p.scale);
    match p.kappa {
        KappaMode::Adaptive => {
            out.push(0);
            put_f32(&mut out, 0.0);
        }
        KappaMode::Fixed(v) => {
            out.push(1);
            put_f32(&mut out, v);
        }
    }
    out.push(u8::from(bank.record.fallback_used));
    put_f32(&mut out, bank.record.kappa_c);
    for e in &bank.entries {
        put_str(&mut out, &e.source_image_id);
        put_u32(&mut out, e.patch_flat_index);
        put_f32(&mut out, e.score);
        put_f32s(&mut out, &e.vector);
    }
    Ok(out)
}

pub fn decode_bank(bytes: &[u8]) -> Result<ClassBank> {
    let mut c = Cursor::new(bytes);
    c.magic(MAGIC)?;
    let version = c.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let class_name = c.string()?;
    let dim = c.u32()? as usize;
    let n = c.u32()? as usize;
    let tau_b = c.f32()?;
    let tau_t = c.f32()?;
    let xi = c.f32()?;
    let eta_min = c.u32()?;
    let n_s = c.u32()? as usize;
    let k = c.u32()? as usize;
    let kappa_lo = c.f32()?;
    let kappa_hi = c.f32()?;
    let scale = c.f32()?;
    let mode = c.u8()?;
    let fixed = c.f32()?;
    let kappa = match (mode, fixed) {
        (0, f) if f.to_bits() == 0 => KappaMode::Adaptive,
        (1, f) => KappaMode::Fixed(f),
        _ => return Err(FormatError::Malformed(format!("kappa mode {mode}"))),
    };
    let fallback_used = c.flag("fallback_used")?;
    let kappa_c = c.f32()?;

    // Each entry needs at least 12 + 4*dim bytes; reject absurd counts
    // before allocating.
    if n.saturating_mul(12 + 4 * dim) > c.remaining() {
        return Err(FormatError::TruncatedFile {
            offset: bytes.len() - c.remaining(),
            needed: n.saturating_mul(12 + 4 * dim),
            available: c.remaining(),
        });
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let source_image_id = c.string()?;
        let patch_flat_index = c.u32()?;
        let score = c.f32()?;
        let vector = c.f32s(dim)?;
        entries.push(BankVector {
            vector,
            source_image_id,
            patch_flat_index,
            score,
        });
    }
    c.finish()?;
    let bank = ClassBank {
        class_name,
        dim,
        entries,
        record: BuildRecord {
            params: IccdParams {
                tau_b,
                tau_t,
                xi,
                eta_min,
                n_s,
                k,
                kappa_lo,
                kappa_hi,
                scale,
                kappa,
            },
            fallback_used,
            kappa_c,
        },
    };
    bank.validate()?;
    Ok(bank)
}

pub fn read_bank(path: &Path) -> Result<ClassBank> {
    decode_bank(&read_file(path)?)
}

pub fn write_bank(bank: &ClassBank, path: &Path) -> Result<()> {
    write_file(path, &encode_bank(bank)?)
}
