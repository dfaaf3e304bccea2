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

//! Fine-tuning heads and procedures: BIO tagging, sentence-level relation classification, and
//! extractive span QA over strided windows.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Component, Manifest};
use crate::datasets::{LabelSet, NerExample, QaQuestion, ReExample, TagSet};
use crate::encoder::{Encoder, EncoderConfig, EncoderInput, Linear};
use crate::rtd::is_discriminator_param;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, LayerwiseLrs, LrSchedule, ParamGroup, ParamStore, Var};
use crate::tokenizer::{encode, pre_tokenize, pre_tokenize_with_offsets, word_to_ids, Encoding, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Ner,
    Re,
    QaSquad,
    QaBioasq,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Ner, Task::Re, Task::QaSquad, Task::QaBioasq];

    pub fn name(self) -> &'static str {
        match self {
            Task::Ner => "ner",
            Task::Re => "re",
            Task::QaSquad => "qa-squad",
            Task::QaBioasq => "qa-bioasq",
        }
    }

    pub fn is_qa(self) -> bool {
        matches!(self, Task::QaSquad | Task::QaBioasq)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?} (expected ner, re, qa-squad or qa-bioasq)")))
    }
}

/// Fine-tuning hyperparameters. [`FinetuneConfig::for_task`] gives the per-task defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub task: Task,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub layerwise_lr_decay: f64,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub batch_size: usize,
    pub max_seq_length: usize,
    pub document_stride: usize,
    pub epochs: usize,
    /// Fraction of all steps spent in linear warmup.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub max_answer_tokens: usize,
    pub n_best: usize,
    /// Start and end candidates kept per window during decoding.
    pub candidate_pool: usize,
}

impl FinetuneConfig {
    pub fn for_task(task: Task) -> Self {
        let (learning_rate, batch_size, max_seq_length) = match task {
            Task::Ner => (5e-5, 32, 128),
            Task::Re => (5e-5, 32, 128),
            Task::QaSquad => (3e-5, 16, 384),
            Task::QaBioasq => (5e-6, 16, 384),
        };
        FinetuneConfig {
            task,
            learning_rate,
            adam: AdamConfig::FINETUNE,
            layerwise_lr_decay: 0.8,
            dropout: 0.1,
            attention_dropout: 0.1,
            batch_size,
            max_seq_length,
            document_stride: 128,
            epochs: 3,
            warmup_fraction: 0.1,
            seed: 1,
            max_answer_tokens: 30,
            n_best: crate::metrics::NBEST,
            candidate_pool: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.n_best == 0 || self.candidate_pool == 0 {
            return Err(Error::Config("batch_size, epochs, n_best and candidate_pool must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup_fraction must lie in [0, 1], got {}", self.warmup_fraction)));
        }
        if self.max_seq_length < 3 {
            return Err(Error::Config("max_seq_length must be at least 3".into()));
        }
        Ok(())
    }
}

/// A tagging example encoded for the model. `loss_mask` marks first subwords.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedExample {
    pub encoding: Encoding,
    pub labels: Vec<usize>,
    pub loss_mask: Vec<bool>,
}

/// Puts each word's tag on its first subword; continuation pieces, specials and padding are
/// excluded from the loss.
pub fn align_labels<S: AsRef<str>>(
    words: &[S],
    tags: &[S],
    vocab: &Vocabulary,
    tag_set: &TagSet,
    max_len: usize,
) -> Result<AlignedExample> {
    if words.len() != tags.len() {
        return Err(Error::TagLengthMismatch {
            words: words.len(),
            tags: tags.len(),
        });
    }
    let tag_ids = tags.iter().map(|t| tag_set.id(t.as_ref())).collect::<Result<Vec<_>>>()?;
    let encoding = encode(words, None, vocab, max_len)?;
    let mut labels = vec![0; encoding.len()];
    let mut loss_mask = vec![false; encoding.len()];
    for i in 0..encoding.len() {
        if let Some(w) = encoding.word_map[i] {
            if i == 0 || encoding.word_map[i - 1] != Some(w) {
                labels[i] = tag_ids[w];
                loss_mask[i] = true;
            }
        }
    }
    Ok(AlignedExample {
        encoding,
        labels,
        loss_mask,
    })
}

/// Splits a sentence at word boundaries so every part fits `max_len` with `[CLS]`/`[SEP]`.
/// A single word longer than the budget forms its own (truncated) part.
pub fn split_for_length<S: AsRef<str>>(words: &[S], vocab: &Vocabulary, max_len: usize) -> Vec<Range<usize>> {
    let budget = max_len.saturating_sub(2).max(1);
    let mut parts = Vec::new();
    let (mut start, mut used) = (0, 0);
    for (i, w) in words.iter().enumerate() {
        let n = word_to_ids(w.as_ref(), vocab).len();
        if used > 0 && used + n > budget {
            parts.push(start..i);
            start = i;
            used = 0;
        }
        used += n;
    }
    if start < words.len() {
        parts.push(start..words.len());
    }
    parts
}

/// Mean cross-entropy over positions flagged in `loss_mask`.
pub fn ner_loss(g: &mut Graph<f32>, logits: Var, labels: &[usize], loss_mask: &[bool]) -> Result<Var> {
    let ce = g.cross_entropy(logits, labels)?;
    let weights: Vec<f32> = loss_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    g.masked_mean(ce, &weights)
}

/// Mean cross-entropy of `[batch, classes]` logits.
pub fn re_loss(g: &mut Graph<f32>, logits: Var, labels: &[usize]) -> Result<Var> {
    let ce = g.cross_entropy(logits, labels)?;
    g.masked_mean(ce, &vec![1.0; labels.len()])
}

/// Mean of the start and end cross-entropies over positions, given `[batch·T, 2]` logits.
pub fn qa_loss(g: &mut Graph<f32>, logits: Var, starts: &[usize], ends: &[usize], seq_len: usize) -> Result<Var> {
    let batch = starts.len();
    let mut sides = Vec::with_capacity(2);
    for (col, targets) in [(0, starts), (1, ends)] {
        let side = g.select_col(logits, col)?;
        let side = g.reshape(side, &[batch, seq_len])?;
        let ce = g.cross_entropy(side, targets)?;
        sides.push(g.masked_mean(ce, &vec![1.0; batch])?);
    }
    let sum = g.add(sides[0], sides[1])?;
    Ok(g.scale(sum, 0.5))
}

/// One strided window over a context, paired with its question.
#[derive(Debug, Clone, PartialEq)]
pub struct QaFeature {
    pub question_id: String,
    /// Index of the context within its question.
    pub context_index: usize,
    pub window_index: usize,
    pub encoding: Encoding,
    /// First context piece covered by this window.
    pub context_offset: usize,
    /// Character span in the original context of the word under each position; `None` outside
    /// the context segment.
    pub token_spans: Vec<Option<(usize, usize)>>,
    /// Training targets; both 0 (the `[CLS]` position) when the gold span is not inside.
    pub start_position: usize,
    pub end_position: usize,
}

/// Windows over `context` with `[CLS] question [SEP] window [SEP]` layout. Window capacity is
/// `max_seq − question pieces − 3`; windows start every `min(stride, capacity)` pieces until
/// the context is covered.
#[allow(clippy::too_many_arguments)]
pub fn qa_featurize(
    question_id: &str,
    question: &str,
    context: &str,
    context_index: usize,
    answer: Option<(usize, usize)>,
    vocab: &Vocabulary,
    max_seq: usize,
    stride: usize,
) -> Result<Vec<QaFeature>> {
    let q_pieces: Vec<usize> = pre_tokenize(question).iter().flat_map(|w| word_to_ids(w, vocab)).collect();
    let words = pre_tokenize_with_offsets(context);
    if q_pieces.is_empty() || words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let capacity = max_seq
        .checked_sub(q_pieces.len() + 3)
        .filter(|&c| c >= 1)
        .ok_or(Error::QuestionExhaustsWindow)?;
    let mut pieces = Vec::new();
    let mut piece_word = Vec::new();
    for (w, word) in words.iter().enumerate() {
        for id in word_to_ids(&word.text, vocab) {
            pieces.push(id);
            piece_word.push(w);
        }
    }
    // answer given as a character range [start, end)
    let gold = answer.and_then(|(start, end)| {
        let first = piece_word.iter().position(|&w| words[w].end > start && words[w].start < end)?;
        let last = piece_word.iter().rposition(|&w| words[w].end > start && words[w].start < end)?;
        Some((first, last))
    });
    let n = pieces.len();
    let step = stride.min(capacity).max(1);
    let mut features = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + capacity).min(n);
        let mut layout = vec![(vocab.cls_id(), 0u8, None)];
        layout.extend(q_pieces.iter().map(|&id| (id, 0, None)));
        layout.push((vocab.sep_id(), 0, None));
        let offset = layout.len();
        layout.extend((start..end).map(|p| (pieces[p], 1, Some(piece_word[p]))));
        layout.push((vocab.sep_id(), 1, None));
        let encoding = Encoding::from_layout(layout, vocab, max_seq);
        let mut token_spans = vec![None; max_seq];
        for p in start..end {
            let w = &words[piece_word[p]];
            token_spans[offset + p - start] = Some((w.start, w.end));
        }
        let (start_position, end_position) = match gold {
            Some((a, b)) if a >= start && b < end => (offset + a - start, offset + b - start),
            _ => (0, 0),
        };
        features.push(QaFeature {
            question_id: question_id.to_string(),
            context_index,
            window_index: features.len(),
            encoding,
            context_offset: start,
            token_spans,
            start_position,
            end_position,
        });
        if end >= n {
            break;
        }
        start += step;
    }
    Ok(features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub text: String,
    pub start_logit: f32,
    pub end_logit: f32,
    pub score: f32,
    pub context_index: usize,
    pub window_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub question_id: String,
    pub predictions: Vec<SpanPrediction>,
}

impl NBestList {
    pub fn texts(&self) -> Vec<String> {
        self.predictions.iter().map(|p| p.text.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub n_best: usize,
    pub max_answer_tokens: usize,
    pub candidate_pool: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            n_best: crate::metrics::NBEST,
            max_answer_tokens: 30,
            candidate_pool: 20,
        }
    }
}

fn top_positions(logits: &[f32], allowed: &[usize], k: usize) -> Vec<usize> {
    let mut idx = allowed.to_vec();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}

/// Ranks answer spans for one question across all of its windows and contexts.
/// `logits[i]` holds the per-position start and end logits of `features[i]`, and
/// `contexts[c]` is the original text of context `c`.
pub fn qa_decode(
    question_id: &str,
    features: &[&QaFeature],
    logits: &[(Vec<f32>, Vec<f32>)],
    contexts: &[&str],
    cfg: &DecodeConfig,
) -> NBestList {
    let mut best: HashMap<String, SpanPrediction> = HashMap::new();
    for (f, (start_logits, end_logits)) in features.iter().zip(logits) {
        let allowed: Vec<usize> = (0..f.token_spans.len()).filter(|&i| f.token_spans[i].is_some()).collect();
        let starts = top_positions(start_logits, &allowed, cfg.candidate_pool);
        let ends = top_positions(end_logits, &allowed, cfg.candidate_pool);
        for &s in &starts {
            for &e in &ends {
                if e < s || e - s + 1 > cfg.max_answer_tokens {
                    continue;
                }
                let (cs, _) = f.token_spans[s].expect("allowed position");
                let (_, ce) = f.token_spans[e].expect("allowed position");
                let text = char_slice(contexts[f.context_index], cs, ce);
                let score = start_logits[s] + end_logits[e];
                let key = text.to_lowercase();
                let replace = best.get(&key).is_none_or(|p| score > p.score);
                if replace {
                    best.insert(
                        key,
                        SpanPrediction {
                            text,
                            start_logit: start_logits[s],
                            end_logit: end_logits[e],
                            score,
                            context_index: f.context_index,
                            window_index: f.window_index,
                        },
                    );
                }
            }
        }
    }
    let mut predictions: Vec<SpanPrediction> = best.into_values().collect();
    predictions.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text)));
    predictions.truncate(cfg.n_best);
    NBestList {
        question_id: question_id.to_string(),
        predictions,
    }
}

/// An encoder with a linear task head.
#[derive(Debug, Clone)]
pub struct TaskModel {
    pub task: Task,
    /// Tag, class, or (for QA) `["start", "end"]` names; index = output unit.
    pub labels: Vec<String>,
    pub encoder: Encoder,
    pub head: Linear,
    pub store: ParamStore<f32>,
}

impl TaskModel {
    fn init(config: EncoderConfig, task: Task, labels: Vec<String>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::init(config, "discriminator", &mut store, &mut rng)?;
        let head = Linear::new(&mut store, "head.dense", config.hidden, labels.len(), ParamGroup::Head, &mut rng)?;
        Ok(TaskModel {
            task,
            labels,
            encoder,
            head,
            store,
        })
    }

    /// Builds a model from a pretrained discriminator, or (for BioASQ) from a SQuAD-tuned
    /// model whose head is kept.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &FinetuneConfig, labels: Vec<String>) -> Result<Self> {
        let mut config = ck.manifest.encoder;
        config.dropout = cfg.dropout;
        config.attention_dropout = cfg.attention_dropout;
        if cfg.max_seq_length > config.max_positions {
            return Err(Error::SequenceTooLong {
                len: cfg.max_seq_length,
                max: config.max_positions,
            });
        }
        let from_squad = ck.manifest.component == Component::TaskHead && ck.manifest.task.as_deref() == Some("qa-squad");
        if cfg.task == Task::QaBioasq && !from_squad {
            return Err(Error::TaskMismatch(
                "qa-bioasq fine-tuning must start from a qa-squad model".into(),
            ));
        }
        if ck.manifest.component == Component::TaskHead && !(cfg.task == Task::QaBioasq && from_squad) {
            return Err(Error::TaskMismatch(format!(
                "{} fine-tuning needs a pretrained discriminator, got a {} model",
                cfg.task,
                ck.manifest.task.as_deref().unwrap_or("task")
            )));
        }
        let mut model = TaskModel::init(config, cfg.task, labels, cfg.seed)?;
        if from_squad {
            if ck.manifest.labels != model.labels {
                return Err(Error::TaskMismatch("head labels differ from the qa-squad model".into()));
            }
            ck.restore(&mut model.store, |_| true)?;
        } else {
            ck.restore(&mut model.store, is_discriminator_param)?;
        }
        Ok(model)
    }

    pub fn checkpoint(&self, step: u64, seed: u64) -> Checkpoint {
        let mut manifest = Manifest::new(Component::TaskHead, self.encoder.config, step, seed);
        manifest.task = Some(self.task.name().to_string());
        manifest.labels = self.labels.clone();
        let mut ck = Checkpoint::new(manifest);
        ck.push_store(&self.store, |_| true);
        ck
    }

    /// Loads a fine-tuned model for prediction.
    pub fn load(ck: &Checkpoint) -> Result<Self> {
        if ck.manifest.component != Component::TaskHead {
            return Err(Error::TaskMismatch("expected a fine-tuned task model".into()));
        }
        let task: Task = ck
            .manifest
            .task
            .as_deref()
            .ok_or_else(|| Error::TaskMismatch("checkpoint names no task".into()))?
            .parse()?;
        let mut model = TaskModel::init(ck.manifest.encoder, task, ck.manifest.labels.clone(), ck.manifest.seed)?;
        ck.restore(&mut model.store, |_| true)?;
        Ok(model)
    }

    /// Head logits for a batch trimmed to `seq_len` positions: `[B·T, C]` for tagging and span
    /// tasks, `[B, C]` for classification from the `[CLS]` position.
    fn logits<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<f32>,
        rows: &[&Encoding],
        seq_len: usize,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let ids: Vec<usize> = rows.iter().flat_map(|e| e.ids[..seq_len].iter().copied()).collect();
        let mask: Vec<u8> = rows.iter().flat_map(|e| e.attention_mask[..seq_len].iter().copied()).collect();
        let segments: Vec<u8> = rows.iter().flat_map(|e| e.segment_ids[..seq_len].iter().copied()).collect();
        let input = EncoderInput {
            ids: &ids,
            attention_mask: &mask,
            segment_ids: &segments,
            batch: rows.len(),
            seq_len,
        };
        let out = self.encoder.forward(g, &self.store, &input, train, rng)?;
        let hidden = g.reshape(out.hidden, &[rows.len() * seq_len, self.encoder.config.hidden])?;
        let hidden = if self.task == Task::Re {
            let cls: Vec<usize> = (0..rows.len()).map(|b| b * seq_len).collect();
            g.select_rows(hidden, &cls)?
        } else {
            hidden
        };
        self.head.forward(g, &self.store, hidden)
    }
}

/// Longest real length in a batch; positions past it are padding everywhere and can be dropped.
fn batch_len(rows: &[&Encoding]) -> usize {
    rows.iter().map(|e| e.real_len()).max().unwrap_or(1).max(1)
}

fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - epoch);
    order.shuffle(&mut rng);
    order
}

/// Mean training loss per epoch.
pub type TrainLog = Vec<f64>;

/// Shared training loop: shuffled mini-batches, linear warmup/decay, layerwise learning rates.
fn train_loop<F>(model: &mut TaskModel, n: usize, cfg: &FinetuneConfig, mut batch_loss: F) -> Result<TrainLog>
where
    F: FnMut(&TaskModel, &mut Graph<f32>, &[usize], &mut ChaCha8Rng) -> Result<Var>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total = per_epoch * cfg.epochs as u64;
    let warmup = (cfg.warmup_fraction * total as f64).round() as u64;
    let schedule = LrSchedule::new(cfg.learning_rate, warmup, total)?;
    let layers = LayerwiseLrs::new(cfg.learning_rate, cfg.layerwise_lr_decay, model.encoder.config.num_layers)?;
    let mut adam = AdamState::new(&model.store);
    let mut step = 0u64;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs as u64 {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(step + 1);
            let mut g = Graph::new();
            let loss = batch_loss(model, &mut g, batch, &mut rng)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(step + 1));
            }
            sum += value as f64;
            let grads = g.backward(loss)?.param_grads(&model.store);
            drop(g);
            step += 1;
            let factor = schedule.lr_at(step) / cfg.learning_rate;
            adam_step(&mut model.store, &grads, &mut adam, &cfg.adam, |p| factor * layers.for_group(p.group))?;
        }
        let mean = sum / per_epoch as f64;
        log::info!("{} epoch {}: mean loss {mean:.4}", cfg.task, epoch + 1);
        log.push(mean);
    }
    Ok(log)
}

/// Encodes NER sentences, splitting long ones; returns the parts and their source sentence.
pub fn prepare_ner(
    examples: &[NerExample],
    vocab: &Vocabulary,
    tag_set: &TagSet,
    max_len: usize,
) -> Result<Vec<(usize, Range<usize>, AlignedExample)>> {
    let mut out = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        if ex.words.len() != ex.tags.len() {
            return Err(Error::TagLengthMismatch {
                words: ex.words.len(),
                tags: ex.tags.len(),
            });
        }
        for part in split_for_length(&ex.words, vocab, max_len) {
            let aligned = align_labels(&ex.words[part.clone()], &ex.tags[part.clone()], vocab, tag_set, max_len)?;
            out.push((i, part, aligned));
        }
    }
    Ok(out)
}

pub fn finetune_ner(
    model: &mut TaskModel,
    train: &[NerExample],
    vocab: &Vocabulary,
    cfg: &FinetuneConfig,
) -> Result<TrainLog> {
    let tag_set = TagSet {
        tags: model.labels.clone(),
    };
    let data = prepare_ner(train, vocab, &tag_set, cfg.max_seq_length)?;
    train_loop(model, data.len(), cfg, |m, g, batch, rng| {
        let rows: Vec<&Encoding> = batch.iter().map(|&i| &data[i].2.encoding).collect();
        let t = batch_len(&rows);
        let labels: Vec<usize> = batch.iter().flat_map(|&i| data[i].2.labels[..t].iter().copied()).collect();
        let mask: Vec<bool> = batch.iter().flat_map(|&i| data[i].2.loss_mask[..t].iter().copied()).collect();
        let logits = m.logits(g, &rows, t, true, rng)?;
        ner_loss(g, logits, &labels, &mask)
    })
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Predicted tag per word, read off each word's first subword.
pub fn predict_ner(model: &TaskModel, sentences: &[Vec<String>], vocab: &Vocabulary, max_len: usize, batch_size: usize) -> Result<Vec<Vec<String>>> {
    let mut out: Vec<Vec<String>> = sentences.iter().map(|s| vec!["O".to_string(); s.len()]).collect();
    let mut parts = Vec::new();
    for (i, words) in sentences.iter().enumerate() {
        for part in split_for_length(words, vocab, max_len) {
            if part.is_empty() {
                continue;
            }
            let enc = encode(&words[part.clone()], None, vocab, max_len)?;
            parts.push((i, part, enc));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let classes = model.labels.len();
    for chunk in parts.chunks(batch_size.max(1)) {
        let rows: Vec<&Encoding> = chunk.iter().map(|(_, _, e)| e).collect();
        let t = batch_len(&rows);
        let mut g = Graph::new();
        let logits = model.logits(&mut g, &rows, t, false, &mut rng)?;
        let values = g.value(logits).data();
        for (b, (sentence, part, enc)) in chunk.iter().enumerate() {
            for pos in 0..t {
                let Some(w) = enc.word_map[pos] else { continue };
                if pos > 0 && enc.word_map[pos - 1] == Some(w) {
                    continue;
                }
                let row = &values[(b * t + pos) * classes..(b * t + pos + 1) * classes];
                out[*sentence][part.start + w] = model.labels[argmax(row)].clone();
            }
        }
    }
    Ok(out)
}

fn re_encode(sentence: &str, vocab: &Vocabulary, max_len: usize) -> Result<Encoding> {
    let words = pre_tokenize(sentence);
    encode(&words, None, vocab, max_len)
}

pub fn finetune_re(
    model: &mut TaskModel,
    train: &[ReExample],
    labels: &LabelSet,
    vocab: &Vocabulary,
    cfg: &FinetuneConfig,
) -> Result<TrainLog> {
    let data = train
        .iter()
        .map(|e| Ok((re_encode(&e.sentence, vocab, cfg.max_seq_length)?, labels.id(&e.label)?)))
        .collect::<Result<Vec<_>>>()?;
    train_loop(model, data.len(), cfg, |m, g, batch, rng| {
        let rows: Vec<&Encoding> = batch.iter().map(|&i| &data[i].0).collect();
        let targets: Vec<usize> = batch.iter().map(|&i| data[i].1).collect();
        let logits = m.logits(g, &rows, batch_len(&rows), true, rng)?;
        re_loss(g, logits, &targets)
    })
}

pub fn predict_re(model: &TaskModel, examples: &[ReExample], vocab: &Vocabulary, max_len: usize, batch_size: usize) -> Result<Vec<String>> {
    let encodings = examples
        .iter()
        .map(|e| re_encode(&e.sentence, vocab, max_len))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let classes = model.labels.len();
    let mut out = Vec::with_capacity(examples.len());
    for chunk in encodings.chunks(batch_size.max(1)) {
        let rows: Vec<&Encoding> = chunk.iter().collect();
        let mut g = Graph::new();
        let logits = model.logits(&mut g, &rows, batch_len(&rows), false, &mut rng)?;
        for row in g.value(logits).data().chunks(classes) {
            out.push(model.labels[argmax(row)].clone());
        }
    }
    Ok(out)
}

pub const QA_LABELS: [&str; 2] = ["start", "end"];

/// Features for every question-context pair. Training features carry the first gold answer of
/// each context.
pub fn qa_features(questions: &[QaQuestion], vocab: &Vocabulary, cfg: &FinetuneConfig) -> Result<Vec<QaFeature>> {
    let mut out = Vec::new();
    for q in questions {
        for (c, ctx) in q.contexts.iter().enumerate() {
            let answer = ctx.answers.first().map(|a| (a.start, a.start + a.text.chars().count()));
            out.extend(qa_featurize(
                &q.id,
                &q.question,
                &ctx.context,
                c,
                answer,
                vocab,
                cfg.max_seq_length,
                cfg.document_stride,
            )?);
        }
    }
    Ok(out)
}

pub fn finetune_qa(
    model: &mut TaskModel,
    train: &[QaQuestion],
    vocab: &Vocabulary,
    cfg: &FinetuneConfig,
) -> Result<TrainLog> {
    let features = qa_features(train, vocab, cfg)?;
    train_loop(model, features.len(), cfg, |m, g, batch, rng| {
        let rows: Vec<&Encoding> = batch.iter().map(|&i| &features[i].encoding).collect();
        let t = batch_len(&rows);
        let starts: Vec<usize> = batch.iter().map(|&i| features[i].start_position).collect();
        let ends: Vec<usize> = batch.iter().map(|&i| features[i].end_position).collect();
        let logits = m.logits(g, &rows, t, true, rng)?;
        qa_loss(g, logits, &starts, &ends, t)
    })
}

/// Ranked answers per question, merged over all windows and contexts.
pub fn predict_qa(model: &TaskModel, questions: &[QaQuestion], vocab: &Vocabulary, cfg: &FinetuneConfig) -> Result<Vec<NBestList>> {
    let decode = DecodeConfig {
        n_best: cfg.n_best,
        max_answer_tokens: cfg.max_answer_tokens,
        candidate_pool: cfg.candidate_pool,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        let features = qa_features(std::slice::from_ref(q), vocab, cfg)?;
        let mut logits = Vec::with_capacity(features.len());
        for chunk in features.chunks(cfg.batch_size.max(1)) {
            let rows: Vec<&Encoding> = chunk.iter().map(|f| &f.encoding).collect();
            let t = batch_len(&rows);
            let mut g = Graph::new();
            let v = model.logits(&mut g, &rows, t, false, &mut rng)?;
            let data = g.value(v).data();
            for (b, f) in chunk.iter().enumerate() {
                let len = f.token_spans.len();
                let mut start = vec![f32::NEG_INFINITY; len];
                let mut end = vec![f32::NEG_INFINITY; len];
                for p in 0..t {
                    start[p] = data[(b * t + p) * 2];
                    end[p] = data[(b * t + p) * 2 + 1];
                }
                logits.push((start, end));
            }
        }
        let refs: Vec<&QaFeature> = features.iter().collect();
        let contexts: Vec<&str> = q.contexts.iter().map(|c| c.context.as_str()).collect();
        out.push(qa_decode(&q.id, &refs, &logits, &contexts, &decode));
    }
    Ok(out)
}

#[cfg(test)]
#[path = "heads_tests.rs"]
mod tests;
