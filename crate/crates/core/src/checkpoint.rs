// Copyright 2026 The rtd authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `RTDCKPT\0`, a little-endian `u32` format version, a little-endian
//! `u64` manifest length, the JSON manifest, then every tensor as little-endian `f32` values in
//! row-major order. Tensor offsets in the manifest are relative to the start of the payload.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::tensor::{ParamStore, Tensor};
use crate::tokenizer::Vocabulary;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RTDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("malformed checkpoint manifest: {0}")]
    Manifest(String),
    #[error("duplicate tensor name {0:?} in checkpoint")]
    DuplicateTensor(String),
    #[error("checkpoint tensor {0:?} has no counterpart in the model")]
    UnknownTensor(String),
    #[error("model parameter {0:?} is missing from the checkpoint")]
    MissingTensor(String),
    #[error("tensor {name:?}: checkpoint shape {found:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Discriminator,
    Generator,
    TaskHead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub component: Component,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub generator: Option<EncoderConfig>,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub labels: Vec<String>,
    pub has_optimizer_state: bool,
    pub step: u64,
    pub seed: u64,
    /// Filled in by [`Checkpoint::to_bytes`].
    #[serde(default)]
    pub tensors: Vec<TensorEntry>,
    /// Free-form run settings needed to rebuild the model or resume training.
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(component: Component, encoder: EncoderConfig, step: u64, seed: u64) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            component,
            encoder,
            generator: None,
            task: None,
            labels: Vec::new(),
            has_optimizer_state: false,
            step,
            seed,
            tensors: Vec::new(),
            metadata: serde_json::Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(manifest: Manifest) -> Self {
        Checkpoint {
            manifest,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.push((name.into(), tensor));
    }

    /// Adds every parameter of `store` whose name passes `keep`.
    pub fn push_store(&mut self, store: &ParamStore<f32>, keep: impl Fn(&str) -> bool) {
        for (_, p) in store.iter() {
            if keep(&p.name) {
                self.push(p.name.clone(), p.value.clone());
            }
        }
    }

    /// Stores the vocabulary in the manifest so downstream commands need no separate file.
    pub fn set_vocab(&mut self, vocab: &Vocabulary) {
        self.manifest.metadata.insert("vocab".into(), serde_json::json!(vocab.entries()));
    }

    pub fn vocab(&self) -> Result<Vocabulary> {
        let tokens: Vec<String> = self
            .manifest
            .metadata
            .get("vocab")
            .cloned()
            .ok_or_else(|| CheckpointError::Manifest("no vocabulary recorded".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| CheckpointError::Manifest(e.to_string())))?;
        Vocabulary::from_tokens(tokens)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies tensors into `store`. Every checkpoint tensor whose name passes `select` must exist
    /// in the store with the same shape, and every selected store parameter must be present.
    pub fn restore(&self, store: &mut ParamStore<f32>, select: impl Fn(&str) -> bool) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, tensor) in self.tensors.iter().filter(|(n, _)| select(n)) {
            let id = store
                .id(name)
                .ok_or_else(|| CheckpointError::UnknownTensor(name.clone()))?;
            let param = store.get_mut(id);
            if param.value.shape() != tensor.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    expected: param.value.shape().to_vec(),
                    found: tensor.shape().to_vec(),
                }
                .into());
            }
            param.value = tensor.clone();
            seen.insert(name.as_str());
        }
        if let Some((_, p)) = store.iter().find(|(_, p)| select(&p.name) && !seen.contains(p.name.as_str())) {
            return Err(CheckpointError::MissingTensor(p.name.clone()).into());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = self.manifest.clone();
        manifest.format_version = FORMAT_VERSION;
        manifest.tensors.clear();
        let mut names = HashSet::new();
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            if !names.insert(name.as_str()) {
                return Err(CheckpointError::DuplicateTensor(name.clone()).into());
            }
            manifest.tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 4 * t.numel() as u64;
        }
        let json = serde_json::to_vec(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() {
            return Err(CheckpointError::Truncated("missing header".into()).into());
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        if bytes.len() < 20 {
            return Err(CheckpointError::Truncated("missing header".into()).into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let payload_start = 20usize
            .checked_add(len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| CheckpointError::Truncated("manifest extends past end of file".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[20..payload_start])
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if manifest.format_version != version {
            return Err(CheckpointError::VersionMismatch {
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        let payload = &bytes[payload_start..];
        let mut names = HashSet::new();
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            if !names.insert(entry.name.as_str()) {
                return Err(CheckpointError::DuplicateTensor(entry.name.clone()).into());
            }
            let numel: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start
                .checked_add(4 * numel)
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| CheckpointError::Truncated(format!("tensor {:?} extends past end of file", entry.name)))?;
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
        }
        Ok(Checkpoint { manifest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{truncated_normal, Encoder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EncoderConfig {
        let mut cfg = EncoderConfig::desk(40);
        cfg.num_layers = 1;
        cfg.hidden = 16;
        cfg.heads = 2;
        cfg.head_size = 8;
        cfg.ffn_inner = 24;
        cfg.embedding_size = 16;
        cfg.max_positions = 10;
        cfg
    }

    fn model(seed: u64) -> ParamStore<f32> {
        let mut store = ParamStore::new();
        Encoder::init(small_config(), "discriminator", &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        store
    }

    fn checkpoint(store: &ParamStore<f32>) -> Checkpoint {
        let mut manifest = Manifest::new(Component::Discriminator, small_config(), 1234, 9);
        manifest.metadata.insert("note".into(), "x".into());
        let mut ck = Checkpoint::new(manifest);
        ck.push_store(store, |_| true);
        ck
    }

    #[test]
    fn round_trip_is_identity() {
        let store = model(1);
        let ck = checkpoint(&store);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.tensors, ck.tensors);
        assert_eq!(back.manifest.step, 1234);
        assert_eq!(back.manifest.encoder, small_config());
        assert_eq!(back.manifest.tensors.len(), store.len());

        let mut other = model(2);
        assert_ne!(other, store);
        back.restore(&mut other, |_| true).unwrap();
        for (id, p) in store.iter() {
            let a: Vec<u32> = p.value.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = other.value(id).data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = checkpoint(&model(3));
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap());
    }

    #[test]
    fn distinct_errors() {
        let bytes = checkpoint(&model(1)).to_bytes().unwrap();

        let err = |r: Result<Checkpoint>| match r {
            Err(Error::Checkpoint(e)) => e,
            other => panic!("unexpected {other:?}"),
        };
        assert!(matches!(err(Checkpoint::from_bytes(&bytes[..bytes.len() - 3])), CheckpointError::Truncated(_)));
        assert!(matches!(err(Checkpoint::from_bytes(&bytes[..30])), CheckpointError::Truncated(_)));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(err(Checkpoint::from_bytes(&bad)), CheckpointError::BadMagic);

        let mut newer = bytes.clone();
        newer[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(
            err(Checkpoint::from_bytes(&newer)),
            CheckpointError::VersionMismatch { found: 2, expected: 1 }
        );
    }

    #[test]
    fn restore_checks_names_and_shapes() {
        let store = model(1);
        let mut ck = checkpoint(&store);
        ck.push("head.extra", Tensor::zeros([2]));
        let mut target = model(2);
        let e = ck.restore(&mut target, |_| true).unwrap_err();
        assert!(matches!(e, Error::Checkpoint(CheckpointError::UnknownTensor(n)) if n == "head.extra"));
        ck.restore(&mut target, |n| !n.starts_with("head.")).unwrap();

        let mut bigger_cfg = small_config();
        bigger_cfg.ffn_inner = 32;
        let mut bigger = ParamStore::new();
        Encoder::init(bigger_cfg, "discriminator", &mut bigger, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let e = checkpoint(&store).restore(&mut bigger, |_| true).unwrap_err();
        assert!(matches!(e, Error::Checkpoint(CheckpointError::ShapeMismatch { .. })));

        let mut partial = Checkpoint::new(Manifest::new(Component::Discriminator, small_config(), 0, 0));
        partial.push("embeddings.word", truncated_normal([40, 16], &mut ChaCha8Rng::seed_from_u64(0)));
        let e = partial.restore(&mut target, |_| true).unwrap_err();
        assert!(matches!(e, Error::Checkpoint(CheckpointError::MissingTensor(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ck = Checkpoint::new(Manifest::new(Component::Generator, small_config(), 0, 0));
        ck.push("a", Tensor::zeros([1]));
        ck.push("a", Tensor::zeros([1]));
        assert!(matches!(
            ck.to_bytes(),
            Err(Error::Checkpoint(CheckpointError::DuplicateTensor(_)))
        ));
    }
}
