//! Versioned binary parameter checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"NCMTCKPT" | u32 version | u64 header_len | header JSON | f32 data...
//! ```
//!
//! The header lists every tensor's name and shape in storage order together
//! with the producing configuration and its hash.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NumericsError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NCMTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

/// Hex SHA-256 of the compact JSON rendering of a configuration.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn corrupt(msg: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn config_hash(&self) -> String {
        config_hash(&self.config)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            config_hash: self.config_hash(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let floats: usize = self.tensors.iter().map(|(_, t)| t.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 4 * floats);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumericsError> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let rest = &bytes[20..];
        if header_len > rest.len() as u64 {
            return Err(corrupt("header length exceeds file size"));
        }
        let (json, mut body) = rest.split_at(header_len as usize);
        let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.config_hash != config_hash(&header.config) {
            return Err(corrupt("config hash does not match embedded config"));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let count = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt(format!("tensor {} shape overflows", entry.name)))?;
            let nbytes = count.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?;
            if nbytes > body.len() {
                return Err(corrupt(format!("truncated data for tensor {}", entry.name)));
            }
            let (chunk, tail) = body.split_at(nbytes);
            body = tail;
            let data = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((entry.name, Tensor::new(entry.shape, data)?));
        }
        if !body.is_empty() {
            return Err(corrupt(format!("{} trailing bytes after tensor data", body.len())));
        }
        Ok(Self { config: header.config, tensors })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NumericsError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NumericsError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config: serde_json::json!({"d_model": 4, "name": "tiny"}),
            tensors: vec![
                ("a".into(), Tensor::from_fn(&[2, 3], |i| i as f32 * 0.5 - 1.0)),
                ("b".into(), Tensor::from_fn(&[4], |i| (i as f32).exp())),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_truncation_and_tampering() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        // flip the config so the stored hash no longer matches
        let text = String::from_utf8_lossy(&bytes).replace("tiny", "tinx");
        assert!(Checkpoint::from_bytes(text.as_bytes()).is_err());
    }
}
