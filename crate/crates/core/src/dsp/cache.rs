//! Binary feature cache: `"ASCF"`, version byte, `u32` band and frame
//! counts, then band-major little-endian `f32` values.

use std::path::Path;

use super::LogMelFeatures;
use crate::error::{read_file, write_file, Error, Result};

const MAGIC: &[u8; 4] = b"ASCF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

pub fn encode_features(f: &LogMelFeatures) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * f.values.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(f.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(f.n_frames as u32).to_le_bytes());
    for v in &f.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<LogMelFeatures> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), format!("feature header needs {HEADER_LEN} bytes")));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "missing ASCF magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(4, format!("unsupported feature cache version {}", bytes[4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (n_mels, n_frames) = (word(5), word(9));
    let expected = n_mels
        .checked_mul(n_frames)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(5, "feature dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!("{n_mels} x {n_frames} features need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(LogMelFeatures { n_mels, n_frames, values })
}

pub fn write_features(path: &Path, f: &LogMelFeatures) -> Result<()> {
    write_file(path, &encode_features(f))
}

pub fn read_features(path: &Path) -> Result<LogMelFeatures> {
    decode_features(&read_file(path)?).map_err(|e| e.context(path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let f = LogMelFeatures {
            n_mels: 2,
            n_frames: 3,
            values: vec![-0.0, f32::MIN_POSITIVE, 1.5, -23.025_85, f32::MAX, 1e-45],
        };
        let back = decode_features(&encode_features(&f)).unwrap();
        assert_eq!(
            back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!((back.n_mels, back.n_frames), (2, 3));
    }

    #[test]
    fn corrupt_files_report_offsets() {
        let f = LogMelFeatures { n_mels: 1, n_frames: 2, values: vec![0.0, 1.0] };
        let mut bytes = encode_features(&f);
        bytes.pop();
        assert!(matches!(decode_features(&bytes), Err(Error::Format { offset: 20, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_features(b"ASC"), Err(Error::Format { offset: 3, .. })));
    }
}
