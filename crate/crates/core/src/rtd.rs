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

//! Replaced-token-detection pretraining.
//!
//! A small generator fills masked positions with tokens sampled from its MLM distribution and the
//! discriminator labels every real position as original or replaced. Both networks share the
//! embedding tables and are trained jointly on `L_MLM + λ·L_RTD`.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Component, Manifest};
use crate::encoder::{Encoder, EncoderConfig, EncoderInput, LayerNormIds, Linear};
use crate::tensor::{
    adam_step, AdamConfig, AdamState, Graph, LrSchedule, ParamGroup, ParamId, ParamStore, Tensor, Var,
};
use crate::tokenizer::{tokenize_text, wordpiece_ids, Encoding, Vocabulary};
use crate::{Error, Result};

pub const DEFAULT_MASK_RATE: f64 = 0.15;
pub const DEFAULT_LAMBDA: f64 = 50.0;
pub const DEFAULT_GENERATOR_RATIO: f64 = 1.0 / 3.0;

/// Number of positions to mask among `n_maskable`: `max(1, round(rate·n))`, capped at `n`.
pub fn masked_count(n_maskable: usize, rate: f64) -> usize {
    if n_maskable == 0 {
        return 0;
    }
    let k = (rate * n_maskable as f64 + 1e-9).round() as usize;
    k.clamp(1, n_maskable)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingPlan {
    /// Sorted positions within the sequence.
    pub positions: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub rate: f64,
}

/// Samples masked positions uniformly without replacement among real, non-special positions.
pub fn sample_masking<R: Rng + ?Sized>(
    encoding: &Encoding,
    vocab: &Vocabulary,
    rate: f64,
    rng: &mut R,
) -> Result<MaskingPlan> {
    let maskable: Vec<usize> = (0..encoding.len())
        .filter(|&i| {
            let id = encoding.ids[i];
            encoding.attention_mask[i] == 1 && id != vocab.cls_id() && id != vocab.sep_id() && id != vocab.pad_id()
        })
        .collect();
    if maskable.is_empty() {
        return Err(Error::NothingToMask);
    }
    let k = masked_count(maskable.len(), rate);
    let mut positions: Vec<usize> = index::sample(rng, maskable.len(), k).into_iter().map(|i| maskable[i]).collect();
    positions.sort_unstable();
    let original_ids = positions.iter().map(|&p| encoding.ids[p]).collect();
    Ok(MaskingPlan {
        positions,
        original_ids,
        rate,
    })
}

pub fn apply_mask(ids: &[usize], plan: &MaskingPlan, mask_id: usize) -> Vec<usize> {
    let mut out = ids.to_vec();
    for &p in &plan.positions {
        out[p] = mask_id;
    }
    out
}

/// Writes sampled tokens into the plan positions; all other positions keep their original id.
pub fn corrupt(ids: &[usize], plan: &MaskingPlan, samples: &[usize]) -> Vec<usize> {
    let mut out = ids.to_vec();
    for (&p, &s) in plan.positions.iter().zip(samples) {
        out[p] = s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RtdLabel {
    Original,
    Replaced,
    Ignore,
}

/// Replaced exactly where a plan position received a token different from the original; padding
/// is ignored and every other position is original.
pub fn derive_labels(original: &[usize], corrupted: &[usize], plan: &MaskingPlan, attention_mask: &[u8]) -> Vec<RtdLabel> {
    let mut labels: Vec<RtdLabel> = attention_mask
        .iter()
        .map(|&m| if m == 1 { RtdLabel::Original } else { RtdLabel::Ignore })
        .collect();
    for &p in &plan.positions {
        if labels[p] == RtdLabel::Original && corrupted[p] != original[p] {
            labels[p] = RtdLabel::Replaced;
        }
    }
    labels
}

/// Draws one token per row from `softmax(logits)` at temperature 1. Computed in f64 outside the
/// graph, so no gradient flows through the samples.
pub fn sample_tokens<R: Rng + ?Sized>(logits: &Tensor<f32>, rng: &mut R) -> Vec<usize> {
    let cols = logits.last_dim();
    logits
        .data()
        .chunks(cols)
        .map(|row| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x as f64));
            let weights: Vec<f64> = row.iter().map(|&x| (x as f64 - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i;
                }
                u -= w;
            }
            // rounding left a sliver of mass past the last bucket
            weights.iter().rposition(|&w| w > 0.0).unwrap_or(cols - 1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLossConfig {
    pub lambda_disc: f64,
    pub generator_ratio: f64,
}

impl Default for JointLossConfig {
    fn default() -> Self {
        JointLossConfig {
            lambda_disc: DEFAULT_LAMBDA,
            generator_ratio: DEFAULT_GENERATOR_RATIO,
        }
    }
}

impl JointLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_disc > 0.0) {
            return Err(Error::Config(format!("lambda_disc must be positive, got {}", self.lambda_disc)));
        }
        if !(self.generator_ratio > 0.0 && self.generator_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "generator_size must lie in (0, 1], got {}",
                self.generator_ratio
            )));
        }
        Ok(())
    }
}

/// Scales hidden size, FFN width and head count by `ratio`, keeping depth, head size and the
/// (shared) embedding size.
pub fn generator_config(disc: &EncoderConfig, ratio: f64) -> Result<EncoderConfig> {
    disc.validate()?;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("generator_size must lie in (0, 1], got {ratio}")));
    }
    let heads = (disc.heads as f64 * ratio).round() as usize;
    if heads < 1 {
        return Err(Error::Config(format!(
            "generator_size {ratio} leaves no attention heads out of {}",
            disc.heads
        )));
    }
    let ffn_inner = ((disc.ffn_inner as f64 * ratio).round() as usize).max(1);
    Ok(EncoderConfig {
        heads,
        hidden: heads * disc.head_size,
        ffn_inner,
        ..*disc
    })
}

pub struct JointLoss {
    pub total: Var,
    pub mlm: Var,
    pub rtd: Var,
}

/// `L_MLM + λ·L_RTD` where `L_MLM` averages generator cross-entropy over plan positions and
/// `L_RTD` averages discriminator binary cross-entropy over every non-ignored position.
pub fn joint_loss(
    g: &mut Graph<f32>,
    generator_logits: Var,
    original_ids: &[usize],
    discriminator_logits: Var,
    labels: &[RtdLabel],
    lambda_disc: f64,
) -> Result<JointLoss> {
    let ce = g.cross_entropy(generator_logits, original_ids)?;
    let mlm = g.masked_mean(ce, &vec![1.0; original_ids.len()])?;
    let targets: Vec<f32> = labels.iter().map(|&l| if l == RtdLabel::Replaced { 1.0 } else { 0.0 }).collect();
    let weights: Vec<f32> = labels.iter().map(|&l| if l == RtdLabel::Ignore { 0.0 } else { 1.0 }).collect();
    let bce = g.bce_with_logits(discriminator_logits, &targets)?;
    let rtd = g.masked_mean(bce, &weights)?;
    let weighted = g.scale(rtd, lambda_disc as f32);
    let total = g.add(mlm, weighted)?;
    Ok(JointLoss { total, mlm, rtd })
}

/// Sentences of one document, already normalized.
pub type Document = Vec<String>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PackStats {
    pub documents: usize,
    pub empty_documents: usize,
    pub sequences: usize,
}

/// Packs sentences greedily into `[CLS] s1 [SEP] s2 [SEP] …` sequences of exactly `max_len`.
/// A sentence that does not fit is split and continues in the next sequence; only the last
/// sequence of a document is padded, and no sequence spans two documents.
pub fn pack_sequences(documents: &[Document], vocab: &Vocabulary, max_len: usize) -> Result<(Vec<Encoding>, PackStats)> {
    if max_len < 3 {
        return Err(Error::Config(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut out = Vec::new();
    let mut stats = PackStats::default();
    for doc in documents {
        stats.documents += 1;
        let sentences: Vec<Vec<usize>> = doc
            .iter()
            .map(|s| tokenize_text(s).iter().flat_map(|w| wordpiece_ids(w, vocab)).collect::<Vec<_>>())
            .filter(|p: &Vec<usize>| !p.is_empty())
            .collect();
        if sentences.is_empty() {
            stats.empty_documents += 1;
            continue;
        }
        let mut current = vec![vocab.cls_id()];
        for pieces in &sentences {
            let mut rest = &pieces[..];
            while !rest.is_empty() {
                let room = max_len - current.len() - 1;
                let take = room.min(rest.len());
                current.extend_from_slice(&rest[..take]);
                current.push(vocab.sep_id());
                rest = &rest[take..];
                if current.len() + 1 >= max_len {
                    out.push(layout(&current, vocab, max_len));
                    current = vec![vocab.cls_id()];
                }
            }
        }
        if current.len() > 1 {
            out.push(layout(&current, vocab, max_len));
        }
    }
    stats.sequences = out.len();
    if stats.empty_documents > 0 {
        log::warn!("skipped {} empty documents", stats.empty_documents);
    }
    Ok((out, stats))
}

fn layout(ids: &[usize], vocab: &Vocabulary, max_len: usize) -> Encoding {
    let first_sep = ids.iter().position(|&i| i == vocab.sep_id()).unwrap_or(ids.len());
    let layout = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, u8::from(i > first_sep), None))
        .collect();
    Encoding::from_layout(layout, vocab, max_len)
}

/// Generator and discriminator sharing one set of embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RtdModel {
    pub discriminator: Encoder,
    pub generator: Encoder,
    rtd_dense: Linear,
    rtd_out: Linear,
    mlm_dense: Linear,
    mlm_norm: LayerNormIds,
    mlm_bias: ParamId,
}

impl RtdModel {
    pub fn init<R: Rng + ?Sized>(
        disc_config: EncoderConfig,
        generator_ratio: f64,
        store: &mut ParamStore<f32>,
        rng: &mut R,
    ) -> Result<Self> {
        let gen_config = generator_config(&disc_config, generator_ratio)?;
        let discriminator = Encoder::init(disc_config, "discriminator", store, rng)?;
        let generator = Encoder::init_with_embeddings(gen_config, "generator", store, discriminator.embeddings, rng)?;
        let (h, gh, e) = (disc_config.hidden, gen_config.hidden, disc_config.embedding_size);
        let rtd_dense = Linear::new(store, "rtd_head.dense", h, h, ParamGroup::Head, rng)?;
        let rtd_out = Linear::new(store, "rtd_head.out", h, 1, ParamGroup::Head, rng)?;
        let mlm_dense = Linear::new(store, "generator.mlm.dense", gh, e, ParamGroup::Head, rng)?;
        let mlm_norm = LayerNormIds::new(store, "generator.mlm.ln", e, ParamGroup::Head)?;
        let mlm_bias = store.add("generator.mlm.bias", Tensor::zeros([disc_config.vocab_size]), ParamGroup::Head, false)?;
        Ok(RtdModel {
            discriminator,
            generator,
            rtd_dense,
            rtd_out,
            mlm_dense,
            mlm_norm,
            mlm_bias,
        })
    }

    /// MLM logits `[rows.len(), vocab]` for the flattened positions `rows` of a masked batch.
    /// The output layer is tied to the shared token embedding matrix.
    pub fn generator_logits<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<f32>,
        store: &ParamStore<f32>,
        input: &EncoderInput<'_>,
        rows: &[usize],
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let out = self.generator.forward(g, store, input, train, rng)?;
        let n = input.batch * input.seq_len;
        let hidden = g.reshape(out.hidden, &[n, self.generator.config.hidden])?;
        let picked = g.select_rows(hidden, rows)?;
        let x = self.mlm_dense.forward(g, store, picked)?;
        let x = g.gelu(x);
        let x = self.mlm_norm.forward(g, store, x)?;
        let word = g.param(store, self.discriminator.embeddings.word);
        let logits = g.matmul_t(x, word)?;
        let bias = g.param(store, self.mlm_bias);
        g.add(logits, bias)
    }

    /// One replaced-vs-original logit per position, `[batch·seq_len]`.
    pub fn discriminator_logits<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<f32>,
        store: &ParamStore<f32>,
        input: &EncoderInput<'_>,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let out = self.discriminator.forward(g, store, input, train, rng)?;
        let n = input.batch * input.seq_len;
        let hidden = g.reshape(out.hidden, &[n, self.discriminator.config.hidden])?;
        let x = self.rtd_dense.forward(g, store, hidden)?;
        let x = g.gelu(x);
        let x = self.rtd_out.forward(g, store, x)?;
        g.reshape(x, &[n])
    }
}

/// Everything needed to rerun a pretraining job bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub encoder: EncoderConfig,
    pub loss: JointLossConfig,
    pub mask_rate: f64,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Write a metrics record every this many steps.
    pub log_every: u64,
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        generator_config(&self.encoder, self.loss.generator_ratio)?;
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::Config(format!("mask_percent must lie in (0, 100), got {}", self.mask_rate * 100.0)));
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size and log_every must be positive".into()));
        }
        if self.max_seq_len > self.encoder.max_positions {
            return Err(Error::SequenceTooLong {
                len: self.max_seq_len,
                max: self.encoder.max_positions,
            });
        }
        Ok(())
    }
}

/// Metrics of one optimizer step (or of an evaluation pass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub mlm_loss: f64,
    pub rtd_loss: f64,
    pub disc_accuracy: f64,
    /// `None` when the batch contained no replaced tokens.
    pub replaced_accuracy: Option<f64>,
    pub original_accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    replaced_hit: usize,
    replaced: usize,
    original_hit: usize,
    original: usize,
}

impl Confusion {
    fn add(&mut self, logits: &[f32], labels: &[RtdLabel]) {
        for (&z, &l) in logits.iter().zip(labels) {
            match l {
                RtdLabel::Replaced => {
                    self.replaced += 1;
                    self.replaced_hit += usize::from(z > 0.0);
                }
                RtdLabel::Original => {
                    self.original += 1;
                    self.original_hit += usize::from(z <= 0.0);
                }
                RtdLabel::Ignore => {}
            }
        }
    }

    fn rates(&self) -> (f64, Option<f64>, Option<f64>, Option<f64>) {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let replaced = ratio(self.replaced_hit, self.replaced);
        let original = ratio(self.original_hit, self.original);
        let balanced = replaced.zip(original).map(|(r, o)| (r + o) / 2.0);
        let acc = ratio(self.replaced_hit + self.original_hit, self.replaced + self.original).unwrap_or(0.0);
        (acc, replaced, original, balanced)
    }
}

struct Forward {
    loss: JointLoss,
    graph: Graph<f32>,
    disc_logits: Var,
    labels: Vec<RtdLabel>,
}

/// Deterministic pretraining driver: batch order, masking, sampling and dropout are all pure
/// functions of the seed and the step index, so resuming from a checkpoint reproduces an
/// uninterrupted run.
pub struct Pretrainer {
    pub config: PretrainConfig,
    pub model: RtdModel,
    pub store: ParamStore<f32>,
    pub vocab: Vocabulary,
    adam: AdamState<f32>,
    step: u64,
    data: Vec<Encoding>,
    permutation: Option<(u64, Vec<usize>)>,
}

fn step_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Pretrainer {
    pub fn new(config: PretrainConfig, vocab: Vocabulary, data: Vec<Encoding>) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.encoder.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} entries but the encoder expects {}",
                vocab.len(),
                config.encoder.vocab_size
            )));
        }
        if data.is_empty() {
            return Err(Error::Config("pretraining corpus produced no sequences".into()));
        }
        if let Some(bad) = data.iter().find(|e| e.len() != config.max_seq_len) {
            return Err(Error::Shape {
                op: "pretraining sequence",
                lhs: vec![bad.len()],
                rhs: vec![config.max_seq_len],
            });
        }
        let mut store = ParamStore::new();
        let model = RtdModel::init(config.encoder, config.loss.generator_ratio, &mut store, &mut step_rng(config.seed, 0))?;
        let adam = AdamState::new(&store);
        Ok(Pretrainer {
            config,
            model,
            store,
            vocab,
            adam,
            step: 0,
            data,
            permutation: None,
        })
    }

    /// Completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let n = self.data.len() as u64;
        let b = self.config.batch_size as u64;
        (0..b)
            .map(|j| {
                let global = step * b + j;
                let epoch = global / n;
                if self.permutation.as_ref().map(|(e, _)| *e) != Some(epoch) {
                    let mut perm: Vec<usize> = (0..self.data.len()).collect();
                    perm.shuffle(&mut step_rng(self.config.seed, u64::MAX - epoch));
                    self.permutation = Some((epoch, perm));
                }
                self.permutation.as_ref().expect("set above").1[(global % n) as usize]
            })
            .collect()
    }

    fn forward<R: Rng + ?Sized>(&self, rows: &[&Encoding], train: bool, rng: &mut R) -> Result<Forward> {
        let t = self.config.max_seq_len;
        let b = rows.len();
        let mut plans = Vec::with_capacity(b);
        for enc in rows {
            plans.push(sample_masking(enc, &self.vocab, self.config.mask_rate, rng)?);
        }
        let ids: Vec<usize> = rows.iter().flat_map(|e| e.ids.iter().copied()).collect();
        let attention: Vec<u8> = rows.iter().flat_map(|e| e.attention_mask.iter().copied()).collect();
        let segments: Vec<u8> = rows.iter().flat_map(|e| e.segment_ids.iter().copied()).collect();
        let masked: Vec<usize> = rows
            .iter()
            .zip(&plans)
            .flat_map(|(e, p)| apply_mask(&e.ids, p, self.vocab.mask_id()))
            .collect();
        let flat_rows: Vec<usize> = plans
            .iter()
            .enumerate()
            .flat_map(|(r, p)| p.positions.iter().map(move |&i| r * t + i))
            .collect();
        let originals: Vec<usize> = plans.iter().flat_map(|p| p.original_ids.iter().copied()).collect();

        let mut g = Graph::new();
        let gen_input = EncoderInput {
            ids: &masked,
            attention_mask: &attention,
            segment_ids: &segments,
            batch: b,
            seq_len: t,
        };
        let gen_logits = self.model.generator_logits(&mut g, &self.store, &gen_input, &flat_rows, train, rng)?;
        let samples = sample_tokens(g.value(gen_logits), rng);

        let mut corrupted = Vec::with_capacity(b * t);
        let mut labels = Vec::with_capacity(b * t);
        let mut offset = 0;
        for (enc, plan) in rows.iter().zip(&plans) {
            let k = plan.positions.len();
            let row = corrupt(&enc.ids, plan, &samples[offset..offset + k]);
            labels.extend(derive_labels(&enc.ids, &row, plan, &enc.attention_mask));
            corrupted.extend(row);
            offset += k;
        }
        let disc_input = EncoderInput {
            ids: &corrupted,
            ..gen_input
        };
        debug_assert_eq!(ids.len(), corrupted.len());
        let disc_logits = self.model.discriminator_logits(&mut g, &self.store, &disc_input, train, rng)?;
        let loss = joint_loss(&mut g, gen_logits, &originals, disc_logits, &labels, self.config.loss.lambda_disc)?;
        Ok(Forward {
            loss,
            graph: g,
            disc_logits,
            labels,
        })
    }

    /// Runs one optimizer step and returns its metrics.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let indices = self.batch_indices(self.step);
        let mut rng = step_rng(self.config.seed, self.step + 1);
        let rows: Vec<&Encoding> = indices.iter().map(|&i| &self.data[i]).collect();
        let fwd = self.forward(&rows, true, &mut rng)?;
        let g = &fwd.graph;
        let total = g.value(fwd.loss.total).item();
        let next = self.step + 1;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss(next));
        }
        let mut confusion = Confusion::default();
        confusion.add(g.value(fwd.disc_logits).data(), &fwd.labels);
        let (acc, replaced, original, balanced) = confusion.rates();
        let record = StepRecord {
            step: next,
            lr: self.config.schedule.lr_at(next),
            loss: total as f64,
            mlm_loss: g.value(fwd.loss.mlm).item() as f64,
            rtd_loss: g.value(fwd.loss.rtd).item() as f64,
            disc_accuracy: acc,
            replaced_accuracy: replaced,
            original_accuracy: original,
            balanced_accuracy: balanced,
        };
        let grads = g.backward(fwd.loss.total)?.param_grads(&self.store);
        drop(fwd);
        let lr = record.lr;
        adam_step(&mut self.store, &grads, &mut self.adam, &self.config.adam, |_| lr)?;
        self.step = next;
        Ok(record)
    }

    /// Trains until `until` completed steps, appending a JSON line to `log` every `log_every`
    /// steps. Returns the logged records.
    pub fn run(&mut self, until: u64, mut log: Option<&mut dyn Write>) -> Result<Vec<StepRecord>> {
        let mut logged = Vec::new();
        while self.step < until {
            let record = self.train_step()?;
            if record.step % self.config.log_every == 0 {
                if let Some(out) = log.as_deref_mut() {
                    let line = serde_json::to_string(&record).expect("records serialize");
                    writeln!(out, "{line}").map_err(|e| Error::io("<metrics log>", e))?;
                }
                logged.push(record);
            }
        }
        Ok(logged)
    }

    /// Measures losses and discriminator accuracy on `data` without dropout and without
    /// updating parameters. Masking and sampling use a dedicated RNG derived from `seed`.
    pub fn evaluate(&self, data: &[Encoding], seed: u64) -> Result<StepRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut confusion = Confusion::default();
        let (mut mlm, mut rtd, mut batches) = (0.0, 0.0, 0usize);
        for chunk in data.chunks(self.config.batch_size) {
            let rows: Vec<&Encoding> = chunk.iter().collect();
            let fwd = self.forward(&rows, false, &mut rng)?;
            mlm += fwd.graph.value(fwd.loss.mlm).item() as f64;
            rtd += fwd.graph.value(fwd.loss.rtd).item() as f64;
            confusion.add(fwd.graph.value(fwd.disc_logits).data(), &fwd.labels);
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::EmptyInput);
        }
        let (acc, replaced, original, balanced) = confusion.rates();
        let (mlm, rtd) = (mlm / batches as f64, rtd / batches as f64);
        Ok(StepRecord {
            step: self.step,
            lr: 0.0,
            loss: mlm + self.config.loss.lambda_disc * rtd,
            mlm_loss: mlm,
            rtd_loss: rtd,
            disc_accuracy: acc,
            replaced_accuracy: replaced,
            original_accuracy: original,
            balanced_accuracy: balanced,
        })
    }

    fn manifest(&self, component: Component) -> Manifest {
        let mut m = Manifest::new(component, self.config.encoder, self.step, self.config.seed);
        m.generator = generator_config(&self.config.encoder, self.config.loss.generator_ratio).ok();
        m.metadata.insert(
            "pretrain".into(),
            serde_json::to_value(self.config).expect("config serializes"),
        );
        m.metadata.insert("vocab".into(), serde_json::json!(self.vocab.entries()));
        m
    }

    /// The fine-tuning artifact: shared embeddings and the discriminator encoder only.
    pub fn discriminator_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.manifest(Component::Discriminator));
        ck.push_store(&self.store, is_discriminator_param);
        ck
    }

    /// All parameters plus optimizer moments, for resuming.
    pub fn resume_checkpoint(&self) -> Checkpoint {
        let mut manifest = self.manifest(Component::Generator);
        manifest.has_optimizer_state = true;
        let mut ck = Checkpoint::new(manifest);
        ck.push_store(&self.store, |_| true);
        for (id, p) in self.store.iter() {
            ck.push(format!("adam.m.{}", p.name), self.adam.m[id.index()].clone());
            ck.push(format!("adam.v.{}", p.name), self.adam.v[id.index()].clone());
        }
        ck
    }

    /// Rebuilds a trainer from a resume checkpoint. The corpus must be the one used originally.
    pub fn resume(ck: &Checkpoint, vocab: Vocabulary, data: Vec<Encoding>) -> Result<Self> {
        if !ck.manifest.has_optimizer_state {
            return Err(Error::Config("checkpoint carries no optimizer state; cannot resume".into()));
        }
        let config: PretrainConfig = ck
            .manifest
            .metadata
            .get("pretrain")
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint lacks pretraining settings".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| Error::Config(e.to_string())))?;
        let mut trainer = Pretrainer::new(config, vocab, data)?;
        ck.restore(&mut trainer.store, |n| !n.starts_with("adam."))?;
        for (id, p) in trainer.store.iter() {
            for (prefix, slot) in [("adam.m.", &mut trainer.adam.m), ("adam.v.", &mut trainer.adam.v)] {
                let name = format!("{prefix}{}", p.name);
                let t = ck
                    .tensor(&name)
                    .ok_or_else(|| crate::checkpoint::CheckpointError::MissingTensor(name.clone()))?;
                if t.shape() != p.value.shape() {
                    return Err(crate::checkpoint::CheckpointError::ShapeMismatch {
                        name,
                        expected: p.value.shape().to_vec(),
                        found: t.shape().to_vec(),
                    }
                    .into());
                }
                slot[id.index()] = t.clone();
            }
        }
        trainer.adam.t = ck.manifest.step;
        trainer.step = ck.manifest.step;
        Ok(trainer)
    }
}

pub fn is_discriminator_param(name: &str) -> bool {
    name.starts_with("embeddings.") || name.starts_with("discriminator.")
}

#[cfg(test)]
#[path = "rtd_tests.rs"]
mod tests;
