//! Little-endian f64 buffers and their CRC-64 checksums.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

/// Reads a binary sidecar, checking its length and checksum.
pub fn read_checked(path: &Path, expected_values: usize, expected_crc: u64) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (expected_values * 8) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let actual = crc64(&bytes);
    if actual != expected_crc {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            expected: expected_crc,
            actual,
        });
    }
    Ok(decode_f64s(&bytes))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest types serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
