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

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input sequence")]
    EmptyInput,

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {id} at position {position} is out of range for a vocabulary of {vocab_size}")]
    TokenOutOfRange {
        id: usize,
        position: usize,
        vocab_size: usize,
    },

    #[error("sequence length {len} exceeds max positions {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("nothing to mask")]
    NothingToMask,

    #[error("question exhausts window")]
    QuestionExhaustsWindow,

    #[error("tag count {tags} does not match word count {words}")]
    TagLengthMismatch { words: usize, tags: usize },

    #[error("unknown label {label:?}; admissible labels: {admissible:?}")]
    UnknownLabel {
        label: String,
        admissible: Vec<String>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("question {id}: answer {text:?} does not occur at offset {start} of its context")]
    AnswerMismatch { id: String, text: String, start: usize },

    #[error("{what} count mismatch: gold {gold}, predicted {pred}")]
    CountMismatch {
        what: &'static str,
        gold: usize,
        pred: usize,
    },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}
