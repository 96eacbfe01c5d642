//! Binary parameter files: magic, version, JSON header, raw little-endian
//! `f64` payload. Values round-trip bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EncoderKind, Layout, ModelDims, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"HETLINK\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint parameter {index} is `{found}` {found_shape:?}, expected `{expected}` {expected_shape:?}")]
    Mismatch {
        index: usize,
        expected: String,
        expected_shape: Vec<usize>,
        found: String,
        found_shape: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Header {
    encoder: EncoderKind,
    dims: ModelDims,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams) -> Result<(), CheckpointError> {
    let layout = params.layout();
    let header = Header {
        encoder: params.kind(),
        dims: params.dims().clone(),
        tensors: (0..layout.len())
            .map(|i| Entry {
                name: layout.name(i).to_string(),
                shape: layout.shape(i).to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for t in params.tensors() {
        buf.clear();
        buf.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(CheckpointError::Header(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let layout = Layout::new(header.encoder, &header.dims);
    if layout.len() != header.tensors.len() {
        return Err(CheckpointError::Header(format!(
            "{} tensors listed, model needs {}",
            header.tensors.len(),
            layout.len()
        )));
    }
    let mut tensors = Vec::with_capacity(layout.len());
    for (i, entry) in header.tensors.iter().enumerate() {
        if entry.name != layout.name(i) || entry.shape != layout.shape(i) {
            return Err(CheckpointError::Mismatch {
                index: i,
                expected: layout.name(i).to_string(),
                expected_shape: layout.shape(i).to_vec(),
                found: entry.name.clone(),
                found_shape: entry.shape.clone(),
            });
        }
        let n: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor::new(entry.shape.clone(), data).expect("shape matches byte count"));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::Header("trailing bytes after parameters".into()));
    }
    Ok(ModelParams::from_parts(header.encoder, header.dims, tensors))
}
