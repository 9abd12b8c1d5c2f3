//! `EMOF` feature files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EMOF" | version: u32 = 1 | num_frames: u32 | dim: u32 | num_frames * dim x f32, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMOF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Variable-length sequence of fixed-width frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    num_frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(num_frames: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if num_frames == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "feature sequence needs at least one frame and one dimension, got {num_frames}x{dim}"
            )));
        }
        if values.len() != num_frames * dim {
            return Err(Error::invalid(format!(
                "{num_frames}x{dim} feature sequence given {} values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value in frame {}", i / dim)));
        }
        Ok(Self {
            num_frames,
            dim,
            values,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// `[num_frames, dim]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.num_frames, self.dim], self.values.clone()).expect("consistent shape")
    }

    pub fn mean_frame(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        for t in 0..self.num_frames {
            for (a, &v) in acc.iter_mut().zip(self.frame(t)) {
                *a += v as f64;
            }
        }
        acc.iter_mut().for_each(|a| *a /= self.num_frames as f64);
        acc
    }
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * seq.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.num_frames as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    for v in &seq.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Parses an in-memory feature file. `path` is only used in diagnostics.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureSequence> {
    let fail = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(0, "bad magic, expected \"EMOF\"".into()));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(fail(4, format!("unsupported format version {version}")));
    }
    let num_frames = u32_at(bytes, 8) as usize;
    let dim = u32_at(bytes, 12) as usize;
    if num_frames == 0 {
        return Err(fail(8, "zero frames".into()));
    }
    if dim == 0 {
        return Err(fail(12, "zero dimension".into()));
    }
    let expected = num_frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| fail(8, "frame count overflows".into()))?;
    if bytes.len() < expected {
        return Err(fail(
            expected,
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(fail(
            HEADER_LEN + 4 * i,
            format!("non-finite value in frame {}", i / dim),
        ));
    }
    Ok(FeatureSequence {
        num_frames,
        dim,
        values,
    })
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

pub fn write_feature_file(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.emof")
    }

    #[test]
    fn single_frame_file() {
        let mut bytes = b"EMOF".to_vec();
        for v in [1u32, 1, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let seq = decode_features(&bytes, p()).unwrap();
        assert_eq!(seq, FeatureSequence::new(1, 2, vec![1.0, 2.0]).unwrap());
        assert_eq!(encode_features(&seq), bytes);
    }

    #[test]
    fn truncated_payload_reports_expected_length() {
        let seq = FeatureSequence::new(3, 2, vec![0.5; 6]).unwrap();
        let bytes = encode_features(&seq);
        let err = decode_features(&bytes[..bytes.len() - 3], p()).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 16 + 24),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let seq = FeatureSequence::new(1, 1, vec![0.0]).unwrap();
        let mut bytes = encode_features(&seq);
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes, p()), Err(Error::Format { offset: 0, .. })));
        let mut bytes = encode_features(&seq);
        bytes[4] = 2;
        assert!(matches!(decode_features(&bytes, p()), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn non_finite_value_names_frame() {
        let seq = FeatureSequence::new(3, 2, vec![0.0; 6]).unwrap();
        let mut bytes = encode_features(&seq);
        bytes[16 + 4 * 5..16 + 4 * 6].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = decode_features(&bytes, p()).unwrap_err().to_string();
        assert!(err.contains("frame 2"), "{err}");
    }

    #[test]
    fn constructor_rejects_empty() {
        assert!(FeatureSequence::new(0, 3, vec![]).is_err());
        assert!(FeatureSequence::new(2, 2, vec![1.0; 3]).is_err());
    }
}
