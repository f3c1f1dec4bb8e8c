//! Single-file checkpoint container: a JSON header describing named f64
//! tensors plus the run configuration, followed by the raw little-endian
//! tensor data.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CNPYCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    iteration: usize,
    config: RunConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub config: RunConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: Vec<TensorEntry> = self
            .params
            .iter()
            .map(|(name, value)| TensorEntry {
                name: name.clone(),
                shape: value.shape().to_vec(),
            })
            .collect();
        let header = Header {
            iteration: self.iteration,
            config: self.config.clone(),
            tensors,
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("header serialization: {e}")))?;

        let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let io_err = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        file.write_all(MAGIC).map_err(io_err)?;
        file.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
        file.write_all(&(header_json.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        file.write_all(&header_json).map_err(io_err)?;
        for (_, value) in self.params.iter() {
            let mut bytes = Vec::with_capacity(value.len() * 8);
            for v in value.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&bytes).map_err(io_err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let io_err = |e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word).map_err(io_err)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes).map_err(io_err)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        file.read_exact(&mut header_json).map_err(io_err)?;
        let header: Header = serde_json::from_slice(&header_json)
            .map_err(|e| Error::Checkpoint(format!("header parse: {e}")))?;

        let mut params = ParamStore::new();
        for entry in &header.tensors {
            let count: usize = entry.shape.iter().product();
            let mut bytes = vec![0u8; count * 8];
            file.read_exact(&mut bytes).map_err(io_err)?;
            let mut values = Vec::with_capacity(count);
            for chunk in bytes.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), values)
                .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", entry.name)))?;
            params.insert(&entry.name, arr);
        }
        Ok(Self {
            iteration: header.iteration,
            config: header.config,
            params,
        })
    }
}

/// SHA-256 hex digest of a file, used for determinism checks.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let hash = Sha256::digest(&bytes);
    Ok(format!("{hash:x}"))
}
