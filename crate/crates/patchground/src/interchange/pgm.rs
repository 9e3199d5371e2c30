//! 8-bit PGM masks.
//!
//! Reads binary (`P5`) and ASCII (`P2`) maps with `maxval <= 255`; every
//! nonzero sample becomes 1. A header comment `# class: <name>` carries the
//! mask's class name. Masks are written as
//! `P5\n# class: <name>\n<w> <h>\n255\n` followed by 0/255 samples.

use std::path::Path;

use patchground_core::AnnotationMask;

use super::{read_file, write_file, FormatError, Result};

const CLASS_TAG: &str = "class:";

/// A decoded grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
    pub class_name: Option<String>,
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
    class_name: Option<String>,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) -> Result<()> {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    let start = self.pos + 1;
                    let end = self.buf[start..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map_or(self.buf.len(), |e| start + e);
                    let text = std::str::from_utf8(&self.buf[start..end])
                        .map_err(|_| FormatError::Malformed("PGM comment is not UTF-8".into()))?
                        .trim();
                    if let Some(name) = text.strip_prefix(CLASS_TAG) {
                        self.class_name = Some(name.trim().to_string());
                    }
                    self.pos = end;
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
        Ok(())
    }

    fn token(&mut self) -> Result<&[u8]> {
        self.skip_space_and_comments()?;
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::TruncatedFile {
                offset: start,
                needed: 1,
                available: 0,
            });
        }
        Ok(&self.buf[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::Malformed(format!("PGM {what} is not a number")))
    }
}

pub fn decode_gray(bytes: &[u8]) -> Result<Gray> {
    let ascii = match bytes.get(..2) {
        Some(b"P5") => false,
        Some(b"P2") => true,
        _ => {
            return Err(FormatError::BadMagic {
                expected: "P5",
                found: bytes.iter().take(2).copied().collect(),
            })
        }
    };
    let mut h = Header {
        buf: bytes,
        pos: 2,
        class_name: None,
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(FormatError::Malformed(format!(
            "PGM maxval {maxval} is not an 8-bit depth"
        )));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| FormatError::DimMismatch("PGM size overflows".into()))?;
    let data = if ascii {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = h.number("sample")?;
            if v > maxval {
                return Err(FormatError::Malformed("PGM sample exceeds maxval".into()));
            }
            data.push(v as u8);
        }
        h.skip_space_and_comments()?;
        if h.pos != bytes.len() {
            return Err(FormatError::DimMismatch("trailing PGM samples".into()));
        }
        data
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        let start = h.pos + 1;
        let available = bytes.len().saturating_sub(start);
        if available < n {
            return Err(FormatError::TruncatedFile {
                offset: start,
                needed: n,
                available,
            });
        }
        if available > n {
            return Err(FormatError::DimMismatch(format!(
                "{} trailing PGM bytes",
                available - n
            )));
        }
        bytes[start..].to_vec()
    };
    Ok(Gray {
        width,
        height,
        data,
        class_name: h.class_name,
    })
}

pub fn encode_gray(width: usize, height: usize, data: &[u8], class_name: Option<&str>) -> Vec<u8> {
    let mut out = b"P5\n".to_vec();
    if let Some(name) = class_name.filter(|n| !n.is_empty()) {
        out.extend_from_slice(format!("# {CLASS_TAG} {name}\n").as_bytes());
    }
    out.extend_from_slice(format!("{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(data);
    out
}

/// Decodes a mask, binarizing nonzero samples.
pub fn decode_mask(bytes: &[u8]) -> Result<AnnotationMask> {
    let g = decode_gray(bytes)?;
    Ok(AnnotationMask::from_nonzero(
        g.height,
        g.width,
        g.data,
        g.class_name.unwrap_or_default(),
    )?)
}

pub fn encode_mask(mask: &AnnotationMask) -> Result<Vec<u8>> {
    let name = mask.class_name();
    if name.contains(['\n', '\r']) || name.trim() != name {
        return Err(FormatError::Malformed(
            "class name cannot carry newlines or surrounding whitespace".into(),
        ));
    }
    let data: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    Ok(encode_gray(mask.width(), mask.height(), &data, Some(name)))
}

pub fn read_mask(path: &Path) -> Result<AnnotationMask> {
    decode_mask(&read_file(path)?)
}

pub fn write_mask(mask: &AnnotationMask, path: &Path) -> Result<()> {
    write_file(path, &encode_mask(mask)?)
}
