//! IDX container format: big-endian header `00 00 <type> <ndim>`, one
//! big-endian `u32` per dimension, then the payload. Only unsigned-byte
//! payloads (type `0x08`) are accepted. Gzip-compressed files are detected by
//! their magic bytes and inflated transparently.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::DataError;

const UBYTE: u8 = 0x08;
/// Upper bound on the element count, far above any MNIST-like file.
const MAX_ELEMENTS: u128 = 1 << 34;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Payload as reals in `[0, 1]`.
    pub fn scaled(&self) -> Vec<f64> {
        self.data.iter().map(|&b| f64::from(b) / 255.0).collect()
    }
}

pub fn load_idx(path: &Path) -> Result<IdxArray, DataError> {
    let raw = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        message: source.to_string(),
    })?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| DataError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        parse_idx(&out)
    } else {
        parse_idx(&raw)
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            expected: 4,
            got: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let ndim = bytes[3] as usize;
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != UBYTE || ndim == 0 {
        return Err(DataError::BadMagic(magic));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(DataError::Truncated {
            expected: header,
            got: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: u128 = dims.iter().map(|&d| d as u128).product();
    if count > MAX_ELEMENTS || header as u128 + count > usize::MAX as u128 {
        return Err(DataError::DimensionOverflow(dims));
    }
    let count = count as usize;
    if bytes.len() < header + count {
        return Err(DataError::Truncated {
            expected: header + count,
            got: bytes.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..header + count].to_vec(),
    })
}
