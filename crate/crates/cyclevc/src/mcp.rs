//! "MCP1" feature files.
//!
//! Little-endian: magic `MCP1`, `u32` Q, `u32` T, then Q·T `f32` values in
//! dimension-major order. Nothing may follow the values.

use std::fs;
use std::path::Path;

use cyclevc_core::features::FeatureSequence;

use crate::error::{io_err, Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"MCP1";
const HEADER: usize = 12;

pub fn encode(x: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * x.values().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(x.q() as u32).to_le_bytes());
    out.extend_from_slice(&(x.t() as u32).to_le_bytes());
    for v in x.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FeatureSequence, FormatError> {
    if bytes.len() < HEADER {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(bad_magic(bytes));
        }
        return Err(FormatError::Truncated {
            needed: HEADER as u64,
            got: bytes.len() as u64,
        });
    }
    if bytes[..4] != MAGIC {
        return Err(bad_magic(bytes));
    }
    let q = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as u64;
    let t = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as u64;
    if q == 0 || t == 0 {
        return Err(FormatError::Corrupt(format!("empty feature matrix {q}x{t}")));
    }
    let needed = q
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER as u64))
        .filter(|&n| usize::try_from(n).is_ok())
        .ok_or(FormatError::DimensionOverflow { q, t })?;
    let got = bytes.len() as u64;
    if got < needed {
        return Err(FormatError::Truncated { needed, got });
    }
    if got > needed {
        return Err(FormatError::Corrupt(format!("{} trailing bytes", got - needed)));
    }
    let values = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureSequence::new(q as usize, t as usize, values).map_err(|e| FormatError::Corrupt(e.to_string()))
}

fn bad_magic(bytes: &[u8]) -> FormatError {
    FormatError::BadMagic {
        expected: MAGIC,
        found: bytes[..4].try_into().expect("4 bytes"),
    }
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    })
}

pub fn write_features(path: &Path, x: &FeatureSequence) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, encode(x)).map_err(io_err(path))
}
