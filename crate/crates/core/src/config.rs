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

//! Run configuration: a flat `key = value` file using the hyperparameter table names, with
//! per-task defaults, and the run manifest written beside every command's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::heads::{FinetuneConfig, Task};
use crate::rtd::{JointLossConfig, PretrainConfig, DEFAULT_GENERATOR_RATIO, DEFAULT_LAMBDA, DEFAULT_MASK_RATE};
use crate::tensor::{AdamConfig, LrSchedule};
use crate::{Error, Result};

/// What a run does: pretraining or fine-tuning one of the tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunKind {
    Pretrain,
    Finetune(Task),
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Pretrain => "pretrain",
            RunKind::Finetune(t) => t.name(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        if s == "pretrain" {
            Ok(RunKind::Pretrain)
        } else {
            s.parse().map(RunKind::Finetune)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSize {
    Base,
    Desk,
}

/// Every tunable of a run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: RunKind,
    pub model_size: ModelSize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub ffn_inner_hidden_size: usize,
    pub attention_heads: usize,
    pub attention_head_size: usize,
    pub embedding_size: usize,
    pub max_position_embeddings: usize,
    pub generator_size: f64,
    pub mask_percent: f64,
    pub disc_weight: f64,
    pub learning_rate: f64,
    pub adam_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub layerwise_lr_decay: f64,
    pub attention_dropout: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_seq_length: usize,
    pub document_stride: usize,
    pub warmup_steps: u64,
    pub warmup_fraction: f64,
    pub train_steps: u64,
    pub epochs: usize,
    pub max_answer_tokens: usize,
    pub n_best: usize,
    pub candidate_pool: usize,
    pub seed: u64,
    pub log_every: u64,
    /// Write a resumable checkpoint every this many steps (0: final only).
    pub save_every: u64,
}

/// Keys in file order.
pub const KEYS: [&str; 33] = [
    "task",
    "model_size",
    "num_layers",
    "hidden_size",
    "ffn_inner_hidden_size",
    "attention_heads",
    "attention_head_size",
    "embedding_size",
    "max_position_embeddings",
    "generator_size",
    "mask_percent",
    "disc_weight",
    "learning_rate",
    "lr_decay",
    "adam_eps",
    "adam_beta1",
    "adam_beta2",
    "layerwise_lr_decay",
    "attention_dropout",
    "dropout",
    "weight_decay",
    "batch_size",
    "max_seq_length",
    "document_stride",
    "warmup_steps",
    "warmup_fraction",
    "train_steps",
    "epochs",
    "max_answer_tokens",
    "n_best",
    "candidate_pool",
    "seed",
    "log_every",
];

const EXTRA_KEYS: [&str; 1] = ["save_every"];

impl RunConfig {
    /// Pretraining defaults at base size.
    pub fn pretrain() -> Self {
        let enc = EncoderConfig::base(0);
        RunConfig {
            task: RunKind::Pretrain,
            model_size: ModelSize::Base,
            num_layers: enc.num_layers,
            hidden_size: enc.hidden,
            ffn_inner_hidden_size: enc.ffn_inner,
            attention_heads: enc.heads,
            attention_head_size: enc.head_size,
            embedding_size: enc.embedding_size,
            max_position_embeddings: enc.max_positions,
            generator_size: DEFAULT_GENERATOR_RATIO,
            mask_percent: DEFAULT_MASK_RATE * 100.0,
            disc_weight: DEFAULT_LAMBDA,
            learning_rate: 2e-4,
            adam_eps: AdamConfig::PRETRAIN.eps,
            adam_beta1: AdamConfig::PRETRAIN.beta1,
            adam_beta2: AdamConfig::PRETRAIN.beta2,
            layerwise_lr_decay: 1.0,
            attention_dropout: enc.attention_dropout,
            dropout: enc.dropout,
            weight_decay: AdamConfig::PRETRAIN.weight_decay,
            batch_size: 256,
            max_seq_length: 128,
            document_stride: 128,
            warmup_steps: 10_000,
            warmup_fraction: 0.0,
            train_steps: 1_000_000,
            epochs: 1,
            max_answer_tokens: 30,
            n_best: crate::metrics::NBEST,
            candidate_pool: 20,
            seed: 1,
            log_every: 100,
            save_every: 0,
        }
    }

    /// Fine-tuning defaults for one task column.
    pub fn finetune(task: Task) -> Self {
        let f = FinetuneConfig::for_task(task);
        RunConfig {
            task: RunKind::Finetune(task),
            learning_rate: f.learning_rate,
            adam_eps: f.adam.eps,
            adam_beta1: f.adam.beta1,
            adam_beta2: f.adam.beta2,
            weight_decay: f.adam.weight_decay,
            layerwise_lr_decay: f.layerwise_lr_decay,
            attention_dropout: f.attention_dropout,
            dropout: f.dropout,
            batch_size: f.batch_size,
            max_seq_length: f.max_seq_length,
            document_stride: f.document_stride,
            warmup_steps: 0,
            warmup_fraction: f.warmup_fraction,
            epochs: f.epochs,
            max_answer_tokens: f.max_answer_tokens,
            n_best: f.n_best,
            candidate_pool: f.candidate_pool,
            seed: f.seed,
            ..RunConfig::pretrain()
        }
    }

    pub fn defaults_for(kind: RunKind) -> Self {
        match kind {
            RunKind::Pretrain => RunConfig::pretrain(),
            RunKind::Finetune(t) => RunConfig::finetune(t),
        }
    }

    /// Parses a config file body. `task` (default `pretrain`) selects the defaults; every other
    /// key overrides one field.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::parse(origin, i + 1, format!("duplicate key {key:?}")));
            }
            entries.push((i + 1, key, value));
        }
        let kind = match entries.iter().find(|(_, k, _)| *k == "task") {
            Some(&(line, _, v)) => RunKind::parse(v).map_err(|e| Error::parse(origin, line, e.to_string()))?,
            None => RunKind::Pretrain,
        };
        let mut cfg = RunConfig::defaults_for(kind);
        for (line, key, value) in entries {
            cfg.set(key, value).map_err(|e| Error::parse(origin, line, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "task" => {
                let kind = RunKind::parse(value)?;
                if kind != self.task {
                    return Err(Error::Config(format!("task is {} and cannot change to {value}", self.task.name())));
                }
            }
            "model_size" => {
                let enc = match value {
                    "base" => {
                        self.model_size = ModelSize::Base;
                        EncoderConfig::base(0)
                    }
                    "desk" => {
                        self.model_size = ModelSize::Desk;
                        EncoderConfig::desk(0)
                    }
                    _ => return Err(Error::Config(format!("model_size must be base or desk, got {value:?}"))),
                };
                self.num_layers = enc.num_layers;
                self.hidden_size = enc.hidden;
                self.ffn_inner_hidden_size = enc.ffn_inner;
                self.attention_heads = enc.heads;
                self.attention_head_size = enc.head_size;
                self.embedding_size = enc.embedding_size;
                self.max_position_embeddings = enc.max_positions;
            }
            "num_layers" => self.num_layers = num(key, value)?,
            "hidden_size" => self.hidden_size = num(key, value)?,
            "ffn_inner_hidden_size" => self.ffn_inner_hidden_size = num(key, value)?,
            "attention_heads" => self.attention_heads = num(key, value)?,
            "attention_head_size" => self.attention_head_size = num(key, value)?,
            "embedding_size" => self.embedding_size = num(key, value)?,
            "max_position_embeddings" => self.max_position_embeddings = num(key, value)?,
            "generator_size" => {
                self.generator_size = match value.split_once('/') {
                    Some((a, b)) => num::<f64>(key, a.trim())? / num::<f64>(key, b.trim())?,
                    None => num(key, value)?,
                }
            }
            "mask_percent" => self.mask_percent = num(key, value)?,
            "disc_weight" => self.disc_weight = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "lr_decay" => {
                if !value.eq_ignore_ascii_case("linear") {
                    return Err(Error::Config(format!("lr_decay supports only linear, got {value:?}")));
                }
            }
            "adam_eps" => self.adam_eps = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "layerwise_lr_decay" => self.layerwise_lr_decay = num(key, value)?,
            "attention_dropout" => self.attention_dropout = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_seq_length" => self.max_seq_length = num(key, value)?,
            "document_stride" => self.document_stride = num(key, value)?,
            "warmup_steps" => self.warmup_steps = num(key, value)?,
            "warmup_fraction" => self.warmup_fraction = num(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "max_answer_tokens" => self.max_answer_tokens = num(key, value)?,
            "n_best" => self.n_best = num(key, value)?,
            "candidate_pool" => self.candidate_pool = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "save_every" => self.save_every = num(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; known keys: {}",
                    KEYS.iter().chain(&EXTRA_KEYS).copied().collect::<Vec<_>>().join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it yields an equal config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let size = match self.model_size {
            ModelSize::Base => "base",
            ModelSize::Desk => "desk",
        };
        let mut out: Vec<(&'static str, String)> = vec![
            ("task", self.task.name().to_string()),
            ("model_size", size.to_string()),
            ("num_layers", self.num_layers.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("ffn_inner_hidden_size", self.ffn_inner_hidden_size.to_string()),
            ("attention_heads", self.attention_heads.to_string()),
            ("attention_head_size", self.attention_head_size.to_string()),
            ("embedding_size", self.embedding_size.to_string()),
            ("max_position_embeddings", self.max_position_embeddings.to_string()),
            ("generator_size", self.generator_size.to_string()),
            ("mask_percent", self.mask_percent.to_string()),
            ("disc_weight", self.disc_weight.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("lr_decay", "linear".to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("layerwise_lr_decay", self.layerwise_lr_decay.to_string()),
            ("attention_dropout", self.attention_dropout.to_string()),
            ("dropout", self.dropout.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_seq_length", self.max_seq_length.to_string()),
            ("document_stride", self.document_stride.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("warmup_fraction", self.warmup_fraction.to_string()),
            ("train_steps", self.train_steps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("max_answer_tokens", self.max_answer_tokens.to_string()),
            ("n_best", self.n_best.to_string()),
            ("candidate_pool", self.candidate_pool.to_string()),
            ("seed", self.seed.to_string()),
            ("log_every", self.log_every.to_string()),
        ];
        out.push(("save_every", self.save_every.to_string()));
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Model settings (the vocabulary size comes from the vocabulary file).
    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            hidden: self.hidden_size,
            ffn_inner: self.ffn_inner_hidden_size,
            heads: self.attention_heads,
            head_size: self.attention_head_size,
            embedding_size: self.embedding_size,
            vocab_size,
            max_positions: self.max_position_embeddings,
            dropout: self.dropout,
            attention_dropout: self.attention_dropout,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_seq_length", self.max_seq_length),
            ("epochs", self.epochs),
            ("n_best", self.n_best),
            ("candidate_pool", self.candidate_pool),
            ("max_answer_tokens", self.max_answer_tokens),
            ("document_stride", self.document_stride),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (k, v) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{k} must lie in [0, 1), got {v}")));
            }
        }
        match self.task {
            RunKind::Pretrain => {
                if self.train_steps == 0 || self.log_every == 0 {
                    return Err(Error::Config("train_steps and log_every must be positive".into()));
                }
                self.encoder(1).validate()?;
                self.pretrain_config(1)?;
            }
            RunKind::Finetune(_) => self.finetune_config().validate()?,
        }
        Ok(())
    }

    pub fn pretrain_config(&self, vocab_size: usize) -> Result<PretrainConfig> {
        let cfg = PretrainConfig {
            encoder: self.encoder(vocab_size),
            loss: JointLossConfig {
                lambda_disc: self.disc_weight,
                generator_ratio: self.generator_size,
            },
            mask_rate: self.mask_percent / 100.0,
            batch_size: self.batch_size,
            max_seq_len: self.max_seq_length,
            schedule: LrSchedule::new(self.learning_rate, self.warmup_steps, self.train_steps)?,
            adam: self.adam(),
            seed: self.seed,
            log_every: self.log_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fine-tuning settings; pretraining runs map to the NER column.
    pub fn finetune_config(&self) -> FinetuneConfig {
        let task = match self.task {
            RunKind::Finetune(t) => t,
            RunKind::Pretrain => Task::Ner,
        };
        FinetuneConfig {
            task,
            learning_rate: self.learning_rate,
            adam: self.adam(),
            layerwise_lr_decay: self.layerwise_lr_decay,
            dropout: self.dropout,
            attention_dropout: self.attention_dropout,
            batch_size: self.batch_size,
            max_seq_length: self.max_seq_length,
            document_stride: self.document_stride,
            epochs: self.epochs,
            warmup_fraction: self.warmup_fraction,
            seed: self.seed,
            max_answer_tokens: self.max_answer_tokens,
            n_best: self.n_best,
            candidate_pool: self.candidate_pool,
        }
    }
}

/// Written as `run_manifest.json` beside a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub checkpoint_format_version: u32,
    /// `None` for commands without a model configuration (evaluate, score-bioasq).
    pub config_hash: Option<String>,
    pub config: Option<BTreeMap<String, String>>,
    pub seed: Option<u64>,
    /// Named input files and their SHA-256 digests.
    pub inputs: BTreeMap<String, InputFile>,
    pub outputs: Vec<String>,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: Option<String>,
}

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

impl RunManifest {
    pub fn new(command: &str, config: Option<&RunConfig>, args: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_format_version: crate::checkpoint::FORMAT_VERSION,
            config_hash: config.map(RunConfig::hash),
            config: config.map(|c| c.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
            seed: config.map(|c| c.seed),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            args,
        }
    }

    /// Records an input; regular files are hashed, directories are recorded by path.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let sha256 = if path.is_file() {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            Some(hex::encode(Sha256::digest(&bytes)))
        } else {
            None
        };
        self.inputs.insert(
            name.to_string(),
            InputFile {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `run_manifest.json` inside `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_to(&dir.join(RUN_MANIFEST_FILE))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let path = path.to_path_buf();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretrain_defaults_match_table() {
        let c = RunConfig::pretrain();
        assert_eq!(
            (c.num_layers, c.hidden_size, c.ffn_inner_hidden_size, c.attention_heads, c.attention_head_size, c.embedding_size),
            (12, 768, 3072, 12, 64, 768)
        );
        assert!((c.generator_size - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((c.mask_percent, c.warmup_steps, c.learning_rate), (15.0, 10_000, 2e-4));
        assert_eq!((c.adam_eps, c.adam_beta1, c.adam_beta2), (1e-6, 0.9, 0.999));
        assert_eq!((c.attention_dropout, c.dropout, c.weight_decay), (0.1, 0.1, 0.01));
        assert_eq!((c.batch_size, c.train_steps), (256, 1_000_000));
        c.validate().unwrap();
    }

    #[test]
    fn finetune_defaults_match_columns() {
        let cols = [
            (Task::Ner, 5e-5, 32, 128),
            (Task::Re, 5e-5, 32, 128),
            (Task::QaSquad, 3e-5, 16, 384),
            (Task::QaBioasq, 5e-6, 16, 384),
        ];
        for (task, lr, batch, seq) in cols {
            let c = RunConfig::finetune(task);
            assert_eq!((c.learning_rate, c.batch_size, c.max_seq_length), (lr, batch, seq));
            assert_eq!((c.adam_eps, c.adam_beta1, c.adam_beta2), (1e-6, 0.9, 0.999));
            assert_eq!((c.layerwise_lr_decay, c.attention_dropout, c.dropout, c.weight_decay), (0.8, 0.1, 0.1, 0.0));
            assert_eq!(c.document_stride, 128);
            assert_eq!(c.finetune_config(), FinetuneConfig::for_task(task));
        }
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "# desk run\ntask = pretrain\nmodel_size = desk\ngenerator_size = 1/3\nlearning_rate = 1e-3  # faster\n\ntrain_steps=2000\nwarmup_steps = 200\nbatch_size = 32\nmax_seq_length = 32\n";
        let c = RunConfig::parse(text, "c.txt").unwrap();
        assert_eq!(c.hidden_size, 128);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.train_steps, 2000);
        let p = c.pretrain_config(200).unwrap();
        assert_eq!(p.encoder, EncoderConfig::desk(200));
        assert_eq!(p.mask_rate, 0.15);

        let ner = RunConfig::parse("task = ner\nepochs = 5\n", "x").unwrap();
        assert_eq!(ner.learning_rate, 5e-5);
        assert_eq!(ner.epochs, 5);
    }

    #[test]
    fn parse_rejects_bad_input() {
        let err = RunConfig::parse("learning_rate = 1e-3\nlearnig_rate = 2\n", "c.txt").unwrap_err();
        assert!(err.to_string().contains("c.txt:2"), "{err}");
        assert!(err.to_string().contains("learnig_rate"));
        assert!(RunConfig::parse("seed = 1\nseed = 2\n", "c").is_err());
        assert!(RunConfig::parse("batch_size = many\n", "c").is_err());
        assert!(RunConfig::parse("just a line\n", "c").is_err());
        assert!(RunConfig::parse("lr_decay = cosine\n", "c").is_err());
        assert!(RunConfig::parse("task = summarize\n", "c").is_err());
        assert!(RunConfig::parse("batch_size = 0\n", "c").is_err());
        assert!(RunConfig::parse("dropout = 1.5\n", "c").is_err());
    }

    #[test]
    fn text_round_trip_and_hash() {
        let mut c = RunConfig::finetune(Task::QaSquad);
        c.seed = 7;
        c.learning_rate = 1.25e-5;
        let back = RunConfig::parse(&c.to_text(), "c").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seed = 8;
        assert_ne!(d.hash(), c.hash());
        let p = RunConfig::parse("model_size = desk\n", "c").unwrap();
        assert_eq!(RunConfig::parse(&p.to_text(), "c").unwrap(), p);
        assert_eq!(KEYS.len() + EXTRA_KEYS.len(), p.entries().len());
    }

    #[test]
    fn manifest_records_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("in.txt");
        std::fs::write(&file, "abc").unwrap();
        let c = RunConfig::pretrain();
        let mut m = RunManifest::new("pretrain", Some(&c), vec!["pretrain".into()]);
        m.input("corpus", &file).unwrap();
        m.input("dir", dir.path()).unwrap();
        m.write(dir.path()).unwrap();
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(RUN_MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.inputs["corpus"].sha256.as_deref(),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        assert_eq!(back.inputs["dir"].sha256, None);
        assert_eq!(back.config_hash.as_deref(), Some(c.hash().as_str()));
    }
}
