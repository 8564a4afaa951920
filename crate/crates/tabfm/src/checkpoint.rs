//! Checkpoint container.
//!
//! Layout: the magic `TABFMCK\n`, a little-endian `u32` header length, a
//! JSON header (version, model kind, spec, transformer or tokenizer state,
//! provenance and a tensor directory), the payload of little-endian `f32`
//! values, and a SHA-256 digest of every preceding byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tabfm_core::models::{ModelKind, ParamMap};
use tabfm_core::neural::Tensor;
use tabfm_core::training::{ModelCheckpoint, ModelSpec, ModelState, Provenance, CHECKPOINT_VERSION};

use crate::error::{CheckpointError, CliError, Result};

pub const MAGIC: &[u8; 8] = b"TABFMCK\n";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset and length in `f32` elements from the start of the payload.
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub state: ModelState,
    pub provenance: Provenance,
    /// Hash of the run configuration that produced the checkpoint.
    pub config_hash: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(ckpt: &ModelCheckpoint, config_hash: Option<&str>) -> Result<Vec<u8>, CheckpointError> {
    let mut tensors = Vec::with_capacity(ckpt.params.len());
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, t) in &ckpt.params {
        tensors.push(TensorEntry { name: name.clone(), shape: t.shape(), offset, len: t.data.len() });
        offset += t.data.len();
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: ckpt.version,
        kind: ckpt.kind,
        spec: ckpt.spec.clone(),
        state: ckpt.state.clone(),
        provenance: ckpt.provenance.clone(),
        config_hash: config_hash.map(str::to_string),
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parses a container, checking the digest before anything else.
pub fn from_bytes(bytes: &[u8]) -> Result<(ModelCheckpoint, Header), CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(CheckpointError::Truncated(format!("{} bytes", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let len_at = MAGIC.len();
    let header_len = u32::from_le_bytes(body[len_at..len_at + 4].try_into().expect("4 bytes")) as usize;
    let start = len_at + 4;
    if body.len() < start + header_len {
        return Err(CheckpointError::Truncated(format!("header needs {header_len} bytes")));
    }
    let header: Header = serde_json::from_slice(&body[start..start + header_len])?;
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: header.version, expected: CHECKPOINT_VERSION });
    }
    let payload = &body[start + header_len..];
    if payload.len() % 4 != 0 {
        return Err(CheckpointError::Truncated(format!("payload of {} bytes is not a whole number of f32", payload.len())));
    }
    let floats = payload.len() / 4;
    let mut params = ParamMap::new();
    let mut expected = 0;
    for e in &header.tensors {
        if e.shape[0] * e.shape[1] != e.len || e.offset + e.len > floats {
            return Err(CheckpointError::Truncated(format!(
                "tensor `{}` of shape {:?} at offset {} exceeds the {floats}-value payload",
                e.name, e.shape, e.offset
            )));
        }
        let data = payload[e.offset * 4..(e.offset + e.len) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::from_vec(e.shape[0], e.shape[1], data).map_err(|err| CheckpointError::Truncated(err.to_string()))?;
        params.insert(e.name.clone(), t);
        expected = expected.max(e.offset + e.len);
    }
    if expected != floats {
        return Err(CheckpointError::Truncated(format!("directory covers {expected} values, payload holds {floats}")));
    }
    let ckpt = ModelCheckpoint {
        version: header.version,
        kind: header.kind,
        spec: header.spec.clone(),
        state: header.state.clone(),
        params,
        provenance: header.provenance.clone(),
    };
    Ok((ckpt, header))
}

/// Writes the container and returns its hex SHA-256.
pub fn save(ckpt: &ModelCheckpoint, path: &Path, config_hash: Option<&str>) -> Result<String> {
    let bytes = to_bytes(ckpt, config_hash).map_err(|source| CliError::Checkpoint { path: path.to_path_buf(), source })?;
    crate::io::write_bytes(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load(path: &Path) -> Result<ModelCheckpoint> {
    Ok(load_with_header(path)?.0)
}

pub fn load_with_header(path: &Path) -> Result<(ModelCheckpoint, Header)> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    from_bytes(&bytes).map_err(|source| CliError::Checkpoint { path: path.to_path_buf(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
