//! Run-length debug dump of an occupancy grid.
//!
//! Layout: magic `GFVOX001`, then little-endian u32 resolution and run count,
//! then `(value, length)` u32 pairs covering all R³ cells in index order.

use thiserror::Error;

use super::voxel::{Occupancy, VoxelSolid};

pub const MAGIC: &[u8; 8] = b"GFVOX001";

#[derive(Debug, Error, PartialEq)]
pub enum RleError {
    #[error("bad magic header")]
    BadMagic,
    #[error("truncated input")]
    Truncated,
    #[error("run value {0} is not 0 or 1")]
    BadValue(u32),
    #[error("runs cover {found} cells, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

pub fn encode(solid: &VoxelSolid) -> Vec<u8> {
    let occ = solid.occupancy();
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for i in 0..occ.len() {
        let v = u32::from(occ.get(i));
        match runs.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => runs.push((v, 1)),
        }
    }
    let mut out = Vec::with_capacity(16 + runs.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(solid.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for (v, n) in runs {
        out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
    }
    out
}

/// Returns `(resolution, occupancy)`; placement is not part of the dump.
pub fn decode(bytes: &[u8]) -> Result<(usize, Occupancy), RleError> {
    if bytes.len() < 8 {
        return Err(RleError::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(RleError::BadMagic);
    }
    let mut words = bytes[8..]
        .chunks(4)
        .map(|c| <[u8; 4]>::try_from(c).map(u32::from_le_bytes));
    let mut next = || words.next().and_then(Result::ok).ok_or(RleError::Truncated);
    let resolution = next()? as usize;
    let runs = next()?;
    let expected = resolution.pow(3);
    let mut occ = Occupancy::new(expected);
    let mut pos = 0usize;
    for _ in 0..runs {
        let value = next()?;
        let len = next()? as usize;
        if value > 1 {
            return Err(RleError::BadValue(value));
        }
        if pos + len > expected {
            return Err(RleError::LengthMismatch {
                expected,
                found: pos + len,
            });
        }
        if value == 1 {
            (pos..pos + len).for_each(|i| occ.set(i));
        }
        pos += len;
    }
    if pos != expected {
        return Err(RleError::LengthMismatch { expected, found: pos });
    }
    Ok((resolution, occ))
}
