//! Checkpoint files.
//!
//! ```text
//! header_len: u64 LE | JSON header (header_len bytes) | f32 LE blobs
//! ```
//!
//! The header records `format_version`, the model config, and for every named
//! tensor its shape plus byte offset and byte length inside the blob section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EmotionModel, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: BTreeMap<String, TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

pub fn encode_checkpoint(model: &EmotionModel) -> Vec<u8> {
    let mut tensors = BTreeMap::new();
    let mut blob = Vec::new();
    for (name, _, t) in model.named_parameters() {
        let offset = blob.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        tensors.insert(
            name,
            TensorEntry {
                shape: t.shape().to_vec(),
                offset,
                length: blob.len() - offset,
            },
        );
    }
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        config: model.config().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + blob.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<EmotionModel> {
    let fail = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 8 {
        return Err(fail(0, "missing header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let blob_start = 8usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| fail(8, format!("header length {header_len} exceeds file size")))?;
    let header: Header =
        serde_json::from_slice(&bytes[8..blob_start]).map_err(|e| fail(8, format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(fail(8, format!("unsupported checkpoint version {}", header.format_version)));
    }
    let blob = &bytes[blob_start..];

    let mut model = EmotionModel::zeros(header.config.clone())?;
    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _, _)| n).collect();
    if names.len() != header.tensors.len() {
        return Err(fail(
            8,
            format!("expected {} tensors, header lists {}", names.len(), header.tensors.len()),
        ));
    }
    for (name, param) in names.iter().zip(model.parameters_mut()) {
        let entry = header
            .tensors
            .get(name)
            .ok_or_else(|| fail(8, format!("missing tensor {name:?}")))?;
        if entry.shape != param.shape() || entry.length != 4 * param.numel() {
            return Err(fail(
                8,
                format!("tensor {name:?}: shape {:?} does not match {:?}", entry.shape, param.shape()),
            ));
        }
        let end = entry.offset + entry.length;
        if end > blob.len() {
            return Err(fail(blob_start + entry.offset, format!("tensor {name:?} runs past end of file")));
        }
        for (dst, chunk) in param
            .data_mut()
            .iter_mut()
            .zip(blob[entry.offset..end].chunks_exact(4))
        {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        if !param.is_finite() {
            return Err(fail(blob_start + entry.offset, format!("tensor {name:?} holds non-finite values")));
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &EmotionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EmotionModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
