//! Checkpoint container: `b"SPKMODEL"`, little-endian `u64` header length,
//! a JSON header (spec, seed, tensor index), then raw little-endian f32 blobs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Parameters, TrainedModel};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::util;

const MAGIC: &[u8; 8] = b"SPKMODEL";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the blob section.
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: u32,
    spec: ModelSpec,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for ((name, shape), t) in model.spec.tensor_layout().into_iter().zip(model.params.tensors()) {
        tensors.push(TensorEntry {
            name,
            shape,
            offset,
            len: t.len(),
        });
        offset += 4 * t.len();
    }
    let header = serde_json::to_vec(&Header {
        format: 1,
        spec: model.spec.clone(),
        seed: model.seed,
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let blobs_at = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("checkpoint header overruns file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..blobs_at])?;
    let blobs = &bytes[blobs_at..];
    let layout = header.spec.tensor_layout();
    if layout.len() != header.tensors.len() {
        return Err(Error::Format("tensor index does not match spec".into()));
    }
    let mut params = Parameters::zeros(&header.spec);
    for ((entry, (name, shape)), dst) in header.tensors.iter().zip(&layout).zip(params.tensors_mut()) {
        if &entry.name != name || &entry.shape != shape || entry.len != dst.len() {
            return Err(Error::Format(format!("tensor {} does not match spec entry {name}", entry.name)));
        }
        let end = entry.offset + 4 * entry.len;
        if end > blobs.len() {
            return Err(Error::Format(format!("tensor {name} overruns file")));
        }
        for (d, c) in dst.iter_mut().zip(blobs[entry.offset..end].chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
    }
    TrainedModel::new(header.spec, params, header.seed)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    util::write_atomic(path.as_ref(), &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    decode_checkpoint(&util::read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, ModelSpec};

    #[test]
    fn roundtrip_after_quantization() {
        let spec = ModelSpec::from_arch(Arch::Cnn3, 64, 4).unwrap();
        let mut m = TrainedModel::init(spec, 9).unwrap();
        m.quantize_f32();
        let bytes = encode_checkpoint(&m).unwrap();
        assert_eq!(decode_checkpoint(&bytes).unwrap(), m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode_checkpoint(b"SPKMODEL").is_err());
    }
}
