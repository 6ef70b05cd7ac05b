//! Binary checkpoint container.
//!
//! ```text
//! magic      8 bytes  "GANDOCKP"
//! version    u32
//! byte order u8       1 = little endian (the only value written)
//! meta_len   u32, then meta_len bytes of JSON metadata
//! count      u32 tensors, each:
//!   name_len u16, name bytes (UTF-8)
//!   ndim     u8, then ndim × u32 dims
//!   values   product(dims) × f32
//! ```
//! All integers use the declared byte order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ArchConfig, DetectorParams};
use crate::error::{Error, Result};
use crate::fsio::atomic_write;
use crate::synthkit::short_hash;

const MAGIC: &[u8; 8] = b"GANDOCKP";
const VERSION: u32 = 1;
const LITTLE_ENDIAN: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub label: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub epoch: usize,
    pub parent_id: Option<String>,
    pub arch: ArchConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: DetectorParams<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, params: DetectorParams<f32>) -> Self {
        Self { meta, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(LITTLE_ENDIAN);
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        let p = &self.params;
        out.extend_from_slice(&(p.num_tensors() as u32).to_le_bytes());
        for i in 0..p.num_tensors() {
            let (name, _, shape) = p.tensor_info(i);
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.tensor(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and validates every tensor name and shape against the
    /// architecture recorded in the metadata.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if r.u8()? != LITTLE_ENDIAN {
            return Err(Error::Checkpoint("unsupported byte order".into()));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let mut params = DetectorParams::<f32>::zeros(&meta.arch)?;
        let count = r.u32()? as usize;
        if count != params.num_tensors() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                params.num_tensors()
            )));
        }
        for i in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Checkpoint("non-UTF-8 tensor name".into()))?;
            let (expected, _, shape) = params.tensor_info(i);
            if name != expected {
                return Err(Error::Checkpoint(format!("tensor {i}: expected '{expected}', found '{name}'")));
            }
            let ndim = r.u8()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != shape {
                return Err(Error::Checkpoint(format!("tensor '{name}': expected shape {shape:?}, found {dims:?}")));
            }
            let n: usize = dims.iter().product();
            let raw = r.take(4 * n)?;
            for (v, b) in params.tensor_mut(i).iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            }
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { meta, params })
    }

    /// Content hash of the serialized checkpoint.
    pub fn id(&self) -> String {
        short_hash(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: "train the model first (`gando train --mode ...`)".into(),
            },
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the architecture matches `arch`.
    pub fn load_for(path: &Path, arch: &ArchConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.meta.arch != arch {
            return Err(Error::Checkpoint(format!(
                "{}: architecture does not match the experiment config",
                path.display()
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let arch = ArchConfig::default();
        Checkpoint::new(
            CheckpointMeta {
                label: "baseline".into(),
                config_hash: "abc".into(),
                global_seed: 9,
                epoch: 3,
                parent_id: None,
                arch: arch.clone(),
            },
            DetectorParams::init(&arch, 9).unwrap(),
        )
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.id(), ck.id());
    }

    #[test]
    fn corrupted_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        // Rename the first tensor.
        let meta_len = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let name_at = 17 + meta_len + 4 + 2;
        let mut renamed = bytes.clone();
        renamed[name_at] = b'X';
        let err = Checkpoint::from_bytes(&renamed).unwrap_err().to_string();
        assert!(err.contains("expected 'block1.conv.weight'"), "{err}");
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        sample().save(&path).unwrap();
        let other = ArchConfig {
            channels: [4, 8, 16, 16],
            ..ArchConfig::default()
        };
        assert!(Checkpoint::load_for(&path, &other).is_err());
        assert!(Checkpoint::load_for(&path, &ArchConfig::default()).is_ok());
    }
}
