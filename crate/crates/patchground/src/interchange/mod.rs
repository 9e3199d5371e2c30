//! On-disk artifacts: feature grids (`SRFG`), class banks (`SRBK`), masks
//! (8-bit PGM) and grounding payloads (JSON).
//!
//! Binary headers and payloads are little-endian; floats are IEEE-754
//! `f32`. Every reader validates the decoded value's invariants and rejects
//! trailing bytes, so `encode(decode(bytes)) == bytes` for every accepted
//! file.

mod bytes;
pub mod payload;
pub mod pgm;
pub mod srbk;
pub mod srfg;

use std::path::{Path, PathBuf};

pub use payload::{read_payload, read_payload_file, write_payload, write_payload_file};
pub use pgm::{decode_gray, encode_gray, read_mask, write_mask, Gray};
pub use srbk::{read_bank, write_bank};
pub use srfg::{read_feature_grid, write_feature_grid};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: Vec<u8>,
    },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    TruncatedFile {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("invalid value: {0}")]
    Invalid(#[from] patchground_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl FormatError {
    /// True for failures reading or writing the filesystem, as opposed to
    /// content that failed validation.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}
