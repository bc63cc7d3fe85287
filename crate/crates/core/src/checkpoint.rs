//! Checkpoint file format: a versioned header line, a JSON manifest of
//! tensor names/shapes, then the raw little-endian f32 arrays in
//! manifest order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{ParameterSet, Tensor};

pub const CHECKPOINT_HEADER: &str = "CURIOFLOCK-CKPT-1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: expected {CHECKPOINT_HEADER:?}, got {0:?}")]
    BadHeader(String),
    #[error("bad manifest: {0}")]
    BadManifest(#[from] serde_json::Error),
    #[error("unsupported dtype {dtype} for tensor {name}")]
    BadDtype { name: String, dtype: String },
    #[error("data section ends before tensor {name}")]
    Truncated { name: String },
    #[error("checkpoint is missing tensor {name}")]
    MissingTensor { name: String },
    #[error("tensor {name}: checkpoint shape {found:?} does not match parameter shape {expected:?}")]
    ShapeMismatch { name: String, found: Vec<usize>, expected: Vec<usize> },
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    layout: String,
    /// Element offset into the data section.
    offset: usize,
    len: usize,
}

/// An on-disk snapshot of named tensors.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Collect every parameter value from the given sets.
    pub fn from_params(sets: &[&ParameterSet]) -> Self {
        let mut tensors = BTreeMap::new();
        for set in sets {
            for (name, value) in set.iter() {
                tensors.insert(name.to_string(), value.clone());
            }
        }
        Self { tensors }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut manifest = Vec::with_capacity(self.tensors.len());
        let mut offset = 0usize;
        for (name, tensor) in &self.tensors {
            manifest.push(ManifestEntry {
                name: name.clone(),
                shape: tensor.shape().to_vec(),
                dtype: "f32".into(),
                layout: "row-major".into(),
                offset,
                len: tensor.numel(),
            });
            offset += tensor.numel();
        }
        let manifest_json = serde_json::to_vec(&manifest)?;

        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(CHECKPOINT_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
        out.write_all(&manifest_json)?;
        for tensor in self.tensors.values() {
            for v in tensor.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = vec![0u8; CHECKPOINT_HEADER.len() + 1];
        file.read_exact(&mut header)?;
        let header_str = String::from_utf8_lossy(&header[..CHECKPOINT_HEADER.len()]).to_string();
        if header_str != CHECKPOINT_HEADER || header[CHECKPOINT_HEADER.len()] != b'\n' {
            return Err(CheckpointError::BadHeader(header_str));
        }
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_json = vec![0u8; manifest_len];
        file.read_exact(&mut manifest_json)?;
        let manifest: Vec<ManifestEntry> = serde_json::from_slice(&manifest_json)?;

        let mut blob = Vec::new();
        file.read_to_end(&mut blob)?;

        let mut tensors = BTreeMap::new();
        for entry in manifest {
            if entry.dtype != "f32" {
                return Err(CheckpointError::BadDtype { name: entry.name, dtype: entry.dtype });
            }
            let start = entry.offset * 4;
            let end = start + entry.len * 4;
            if end > blob.len() {
                return Err(CheckpointError::Truncated { name: entry.name });
            }
            let data: Vec<f32> = blob[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.insert(entry.name, Tensor::new(entry.shape, data));
        }
        Ok(Self { tensors })
    }

    /// Copy checkpoint values into an existing parameter set. Every
    /// parameter in the set must be present with a matching shape.
    pub fn load_into(&self, params: &mut ParameterSet) -> Result<(), CheckpointError> {
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in &names {
            let stored = self
                .tensors
                .get(name)
                .ok_or_else(|| CheckpointError::MissingTensor { name: name.clone() })?;
            let target = params.get(name).expect("iterating existing names");
            if stored.shape() != target.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    found: stored.shape().to_vec(),
                    expected: target.shape().to_vec(),
                });
            }
        }
        for name in &names {
            let stored = self.tensors.get(name).unwrap().clone();
            *params.get_mut(name).unwrap() = stored;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::EncoderSize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = crate::networks::build_encoder("wm.phi", EncoderSize::Small, 64, 3).unwrap();
        let mut p = ParameterSet::new();
        enc.stack.init_params(&mut p, &mut rng);
        p
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let p = params(1);
        let dir = std::env::temp_dir().join("curioflock-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ckpt");
        Checkpoint::from_params(&[&p]).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let mut q = params(2);
        assert_ne!(p.content_hash(), q.content_hash());
        loaded.load_into(&mut q).unwrap();
        assert_eq!(p.content_hash(), q.content_hash());
    }

    #[test]
    fn file_starts_with_versioned_header() {
        let p = params(3);
        let path = std::env::temp_dir().join("curioflock-ckpt-test").join("header.ckpt");
        Checkpoint::from_params(&[&p]).save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"CURIOFLOCK-CKPT-1\n"));
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let path = std::env::temp_dir().join("curioflock-ckpt-test").join("bad.ckpt");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, b"NOT-A-CHECKPOINT!!\nxxxx").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(CheckpointError::BadHeader(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = params(4);
        let path = std::env::temp_dir().join("curioflock-ckpt-test").join("shape.ckpt");
        Checkpoint::from_params(&[&p]).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        // a 96x96 encoder has a different dense layer
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = crate::networks::build_encoder("wm.phi", EncoderSize::Small, 96, 3).unwrap();
        let mut other = ParameterSet::new();
        enc.stack.init_params(&mut other, &mut rng);
        assert!(matches!(
            loaded.load_into(&mut other),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn saving_same_params_is_byte_identical() {
        let p = params(6);
        let dir = std::env::temp_dir().join("curioflock-ckpt-test");
        let a = dir.join("det-a.ckpt");
        let b = dir.join("det-b.ckpt");
        Checkpoint::from_params(&[&p]).save(&a).unwrap();
        Checkpoint::from_params(&[&p]).save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
