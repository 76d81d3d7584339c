//! Self-describing binary checkpoints.
//!
//! Layout: magic `SATGANCK`, u32 format version, u64 header length, JSON
//! header, then every tensor's f32 data (little endian) in header order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::network::Network;
use super::spec::NetworkSpec;
use super::GanKind;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SATGANCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub gan_kind: GanKind,
    pub class_name: String,
    pub z_dim: i64,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    /// Network role -> architecture fingerprint.
    pub fingerprints: BTreeMap<String, String>,
    /// Serialized training configuration.
    pub config: serde_json::Value,
    /// Arbitrary counters that must survive a resume (optimizer steps,
    /// update schedule position, ...).
    pub counters: BTreeMap<String, u64>,
    /// Serialized training history up to `epoch`.
    #[serde(default)]
    pub history: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<i64>,
    pub data: Vec<f32>,
}

impl StoredTensor {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Result<Self> {
        let flat = t.detach().to_kind(tch::Kind::Float).contiguous().view(-1);
        Ok(StoredTensor {
            name: name.into(),
            shape: t.size(),
            data: Vec::<f32>::try_from(&flat)?,
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data).reshape(&self.shape)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            tensors: Vec::new(),
        }
    }

    /// Records `spec`'s fingerprint under `role` and stores every tensor of
    /// `net` as `<role>/<name>`.
    pub fn add_network(&mut self, role: &str, net: &Network) -> Result<()> {
        self.meta
            .fingerprints
            .insert(role.to_string(), net.spec().fingerprint());
        for (name, t, _) in net.named_tensors() {
            self.tensors
                .push(StoredTensor::from_tensor(format!("{role}/{name}"), t)?);
        }
        Ok(())
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) -> Result<()> {
        self.tensors.push(StoredTensor::from_tensor(name, t)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&StoredTensor> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn verify(&self, role: &str, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.fingerprint();
        let found = self
            .meta
            .fingerprints
            .get(role)
            .cloned()
            .unwrap_or_else(|| "<absent>".into());
        if found != expected {
            return Err(Error::FingerprintMismatch {
                role: role.to_string(),
                expected,
                found,
            });
        }
        Ok(())
    }

    /// Rebuilds the network stored under `role`, refusing architecture drift.
    pub fn restore_network(&self, role: &str, spec: &NetworkSpec) -> Result<Network> {
        self.verify(role, spec)?;
        let net = Network::new(spec)?;
        for (name, _, _) in net.named_tensors() {
            let stored = self.require(&format!("{role}/{name}"))?;
            net.copy_named(&name, &stored.to_tensor())?;
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(what.to_string());
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().map(|&d| d as usize).product();
            let end = offset + n * 4;
            if end > bytes.len() {
                return Err(bad("truncated tensor data"));
            }
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            tensors.push(StoredTensor {
                name: entry.name,
                shape: entry.shape,
                data,
            });
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
