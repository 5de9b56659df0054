//! Versioned parameter checkpoints: a JSON header naming each tensor and its
//! shape, followed by the raw little-endian payload and a SHA-256 digest.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SSCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
        };
        let payload: Vec<f64> = self
            .tensors
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect();
        container::encode(
            MAGIC,
            VERSION,
            &serde_json::to_value(header).expect("header serializes"),
            &payload,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(bytes, MAGIC, VERSION)?;
        let header: Header = serde_json::from_value(header)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n = e.rows * e.cols;
            let data = payload
                .get(offset..offset + n)
                .ok_or_else(|| Error::Format(format!("payload too short for tensor {}", e.name)))?;
            offset += n;
            let t = Array2::from_shape_vec((e.rows, e.cols), data.to_vec()).expect("length checked");
            tensors.push((e.name, t));
        }
        if offset != payload.len() {
            return Err(Error::Format("payload longer than declared tensors".into()));
        }
        Ok(Checkpoint {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        container::write_file(path, &bytes)?;
        Ok(container::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    /// Hex SHA-256 of the serialized form.
    pub fn checksum(&self) -> String {
        container::sha256_hex(&self.to_bytes())
    }

    /// Hex SHA-256 over tensor names, shapes and values only, ignoring the
    /// metadata block.
    pub fn tensor_checksum(&self) -> String {
        let mut bytes = Vec::new();
        for (name, t) in &self.tensors {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(0);
            bytes.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
            bytes.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
            for v in t.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        container::sha256_hex(&bytes)
    }

    /// Tensors whose name starts with `prefix.`, in stored order.
    pub fn group(&self, prefix: &str) -> Vec<Array2<f64>> {
        let p = format!("{prefix}.");
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with(&p))
            .map(|(_, t)| t.clone())
            .collect()
    }
}
