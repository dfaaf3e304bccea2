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

//! Replaced-token-detection pretraining and biomedical fine-tuning toolkit.
//!
//! The crate is organized bottom-up:
//! - [`tokenizer`]: corpus normalization and WordPiece encoding against a fixed vocabulary.
//! - [`tensor`]: a small reverse-mode autodiff engine, Adam and learning-rate schedules.
//! - [`encoder`]: the BERT-style transformer encoder shared by generator and discriminator.
//! - [`rtd`]: masking, generator sampling, the joint generator/discriminator objective and the
//!   pretraining loop.
//! - [`heads`]: NER / relation / extractive QA heads, featurization, decoding and fine-tuning.
//! - [`datasets`]: readers and writers for CoNLL, relation TSV, SQuAD and BioASQ files and the
//!   pretraining corpus.
//! - [`metrics`]: entity-level P/R/F, relation F1, SACC/LACC/MRR, seed averaging and the batch
//!   score-ratio table.
//! - [`checkpoint`] and [`config`]: checkpoint container, run configuration and run manifests.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod encoder;
mod error;
pub mod heads;
pub mod metrics;
pub mod rtd;
pub mod synthetic;
pub mod tensor;
pub mod tokenizer;

pub use error::{Error, Result};
