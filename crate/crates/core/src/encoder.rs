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

//! BERT-style post-layer-norm transformer encoder.
//!
//! Parameters live in a [`ParamStore`]; an [`Encoder`] only records the ids of its tensors so
//! that the generator and discriminator can share one set of embedding tables.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tensor::{Graph, ParamGroup, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub ffn_inner: usize,
    pub heads: usize,
    pub head_size: usize,
    pub embedding_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
}

impl EncoderConfig {
    /// The base architecture: 12 layers, hidden 768, FFN 3072, 12 heads of 64, embeddings 768.
    pub fn base(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 12,
            hidden: 768,
            ffn_inner: 3072,
            heads: 12,
            head_size: 64,
            embedding_size: 768,
            vocab_size,
            max_positions: 512,
            dropout: 0.1,
            attention_dropout: 0.1,
        }
    }

    /// A laptop-sized configuration used by tests and toy runs.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 4,
            hidden: 128,
            ffn_inner: 512,
            heads: 4,
            head_size: 32,
            embedding_size: 128,
            vocab_size,
            max_positions: 128,
            dropout: 0.1,
            attention_dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads * self.head_size != self.hidden {
            return Err(Error::Config(format!(
                "heads ({}) x head_size ({}) must equal hidden ({})",
                self.heads, self.head_size, self.hidden
            )));
        }
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("ffn_inner", self.ffn_inner),
            ("embedding_size", self.embedding_size),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, p) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    /// Number of scalars in an encoder with its own embeddings, computed from the config alone.
    pub fn param_count(&self) -> usize {
        let (e, h, f) = (self.embedding_size, self.hidden, self.ffn_inner);
        let embeddings = (self.vocab_size + self.max_positions + 2) * e + 2 * e;
        let projection = if e != h { e * h + h } else { 0 };
        let layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h;
        embeddings + projection + self.num_layers * layer
    }
}

/// Ids of the embedding tables, shared between generator and discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingIds {
    pub word: ParamId,
    pub position: ParamId,
    pub segment: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

/// A dense layer `x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        inputs: usize,
        outputs: usize,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.add(format!("{name}.weight"), truncated_normal([inputs, outputs], rng), group, true)?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros([outputs]), group, false)?,
        })
    }

    /// Applies the layer to a rank-2 input `[N, in]`.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormIds {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize, group: ParamGroup) -> Result<Self> {
        Ok(LayerNormIds {
            gain: store.add(format!("{name}.gain"), Tensor::full([dim], S::one()), group, false)?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros([dim]), group, false)?,
        })
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LAYER_NORM_EPS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerIds {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attention_norm: LayerNormIds,
    ffn_in: Linear,
    ffn_out: Linear,
    ffn_norm: LayerNormIds,
}

/// Truncated normal `N(0, 0.02²)` cut at two standard deviations.
pub fn truncated_normal<S: Scalar, R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, rng: &mut R) -> Tensor<S> {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        let z = loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z;
            }
        };
        *x = S::lit(z * INIT_STD);
    }
    t
}

/// Creates the shared embedding tables.
pub fn init_embeddings<S: Scalar, R: Rng + ?Sized>(
    config: &EncoderConfig,
    store: &mut ParamStore<S>,
    rng: &mut R,
) -> Result<EmbeddingIds> {
    let e = config.embedding_size;
    let group = ParamGroup::Embeddings;
    Ok(EmbeddingIds {
        word: store.add("embeddings.word", truncated_normal([config.vocab_size, e], rng), group, true)?,
        position: store.add("embeddings.position", truncated_normal([config.max_positions, e], rng), group, true)?,
        segment: store.add("embeddings.segment", truncated_normal([2, e], rng), group, true)?,
        ln_gain: store.add("embeddings.ln.gain", Tensor::full([e], S::one()), group, false)?,
        ln_bias: store.add("embeddings.ln.bias", Tensor::zeros([e]), group, false)?,
    })
}

/// A batch of already-encoded sequences, row-major `[batch, seq_len]`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub ids: &'a [usize],
    pub attention_mask: &'a [u8],
    pub segment_ids: &'a [u8],
    pub batch: usize,
    pub seq_len: usize,
}

pub struct EncoderOutput {
    /// Final hidden states, `[batch, seq_len, hidden]`.
    pub hidden: Var,
    /// Attention probabilities per layer (before attention dropout), `[batch*heads, T, T]`.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub embeddings: EmbeddingIds,
    projection: Option<Linear>,
    layers: Vec<LayerIds>,
}

impl Encoder {
    /// Initializes an encoder with its own embedding tables.
    pub fn init<S: Scalar, R: Rng + ?Sized>(
        config: EncoderConfig,
        prefix: &str,
        store: &mut ParamStore<S>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let embeddings = init_embeddings(&config, store, rng)?;
        Self::init_with_embeddings(config, prefix, store, embeddings, rng)
    }

    /// Initializes an encoder on top of existing embedding tables.
    pub fn init_with_embeddings<S: Scalar, R: Rng + ?Sized>(
        config: EncoderConfig,
        prefix: &str,
        store: &mut ParamStore<S>,
        embeddings: EmbeddingIds,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let word_shape = store.value(embeddings.word).shape().to_vec();
        if word_shape != [config.vocab_size, config.embedding_size] {
            return Err(Error::Shape {
                op: "shared embeddings",
                lhs: word_shape,
                rhs: vec![config.vocab_size, config.embedding_size],
            });
        }
        let (e, h, f) = (config.embedding_size, config.hidden, config.ffn_inner);
        let projection = if e != h {
            Some(Linear::new(store, &format!("{prefix}.embeddings_project"), e, h, ParamGroup::Embeddings, rng)?)
        } else {
            None
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let group = ParamGroup::Layer(i);
            let p = format!("{prefix}.layer.{i}");
            layers.push(LayerIds {
                query: Linear::new(store, &format!("{p}.attention.query"), h, h, group, rng)?,
                key: Linear::new(store, &format!("{p}.attention.key"), h, h, group, rng)?,
                value: Linear::new(store, &format!("{p}.attention.value"), h, h, group, rng)?,
                output: Linear::new(store, &format!("{p}.attention.output"), h, h, group, rng)?,
                attention_norm: LayerNormIds::new(store, &format!("{p}.attention.ln"), h, group)?,
                ffn_in: Linear::new(store, &format!("{p}.ffn.in"), h, f, group, rng)?,
                ffn_out: Linear::new(store, &format!("{p}.ffn.out"), f, h, group, rng)?,
                ffn_norm: LayerNormIds::new(store, &format!("{p}.ffn.ln"), h, group)?,
            });
        }
        Ok(Encoder {
            config,
            embeddings,
            projection,
            layers,
        })
    }

    fn validate_input(&self, input: &EncoderInput<'_>) -> Result<()> {
        let n = input.batch * input.seq_len;
        if input.ids.len() != n || input.attention_mask.len() != n || input.segment_ids.len() != n {
            return Err(Error::Shape {
                op: "encoder input",
                lhs: vec![input.batch, input.seq_len],
                rhs: vec![input.ids.len(), input.attention_mask.len(), input.segment_ids.len()],
            });
        }
        if input.seq_len > self.config.max_positions {
            return Err(Error::SequenceTooLong {
                len: input.seq_len,
                max: self.config.max_positions,
            });
        }
        if let Some(position) = input.ids.iter().position(|&id| id >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: input.ids[position],
                position,
                vocab_size: self.config.vocab_size,
            });
        }
        if let Some(position) = input.segment_ids.iter().position(|&s| s > 1) {
            return Err(Error::Config(format!("segment id at position {position} must be 0 or 1")));
        }
        Ok(())
    }

    /// Runs the encoder. Dropout is active only when `train` is set.
    pub fn forward<S: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<S>,
        store: &ParamStore<S>,
        input: &EncoderInput<'_>,
        train: bool,
        rng: &mut R,
    ) -> Result<EncoderOutput> {
        self.validate_input(input)?;
        let cfg = &self.config;
        let (b, t) = (input.batch, input.seq_len);
        let (h, heads, d) = (cfg.hidden, cfg.heads, cfg.head_size);
        let dropout = if train { cfg.dropout } else { 0.0 };
        let attention_dropout = if train { cfg.attention_dropout } else { 0.0 };

        let word = g.param(store, self.embeddings.word);
        let position = g.param(store, self.embeddings.position);
        let segment = g.param(store, self.embeddings.segment);
        let positions: Vec<usize> = (0..b).flat_map(|_| 0..t).collect();
        let segments: Vec<usize> = input.segment_ids.iter().map(|&s| s as usize).collect();
        let x = g.embedding(word, input.ids)?;
        let p = g.embedding(position, &positions)?;
        let s = g.embedding(segment, &segments)?;
        let x = g.add(x, p)?;
        let x = g.add(x, s)?;
        let gain = g.param(store, self.embeddings.ln_gain);
        let bias = g.param(store, self.embeddings.ln_bias);
        let x = g.layer_norm(x, gain, bias, LAYER_NORM_EPS)?;
        let mut x = g.dropout(x, dropout, rng);
        if let Some(projection) = &self.projection {
            x = projection.forward(g, store, x)?;
        }

        let keep: Vec<bool> = input.attention_mask.iter().map(|&m| m == 1).collect();
        let scale = S::lit(1.0 / (d as f64).sqrt());
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let split = |g: &mut Graph<S>, v: Var| -> Result<Var> {
                let v = g.reshape(v, &[b, t, heads, d])?;
                let v = g.swap_axes12(v)?;
                g.reshape(v, &[b * heads, t, d])
            };
            let q = layer.query.forward(g, store, x)?;
            let q = split(g, q)?;
            let k = layer.key.forward(g, store, x)?;
            let k = split(g, k)?;
            let v = layer.value.forward(g, store, x)?;
            let v = split(g, v)?;
            let scores = g.matmul_t(q, k)?;
            let scores = g.scale(scores, scale);
            let scores = g.mask_keys(scores, &keep, heads)?;
            let probs = g.softmax(scores);
            attention.push(probs);
            let probs = g.dropout(probs, attention_dropout, rng);
            let ctx = g.matmul(probs, v)?;
            let ctx = g.reshape(ctx, &[b, heads, t, d])?;
            let ctx = g.swap_axes12(ctx)?;
            let ctx = g.reshape(ctx, &[b * t, h])?;
            let out = layer.output.forward(g, store, ctx)?;
            let out = g.dropout(out, dropout, rng);
            let res = g.add(out, x)?;
            let x1 = layer.attention_norm.forward(g, store, res)?;

            let f = layer.ffn_in.forward(g, store, x1)?;
            let f = g.gelu(f);
            let f = layer.ffn_out.forward(g, store, f)?;
            let f = g.dropout(f, dropout, rng);
            let res = g.add(f, x1)?;
            x = layer.ffn_norm.forward(g, store, res)?;
        }
        let hidden = g.reshape(x, &[b, t, h])?;
        Ok(EncoderOutput { hidden, attention })
    }

    /// Every parameter id owned or used by this encoder, embeddings first.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let e = &self.embeddings;
        let mut ids = vec![e.word, e.position, e.segment, e.ln_gain, e.ln_bias];
        if let Some(p) = &self.projection {
            ids.extend([p.weight, p.bias]);
        }
        for l in &self.layers {
            for lin in [&l.query, &l.key, &l.value, &l.output] {
                ids.extend([lin.weight, lin.bias]);
            }
            ids.extend([l.attention_norm.gain, l.attention_norm.bias]);
            for lin in [&l.ffn_in, &l.ffn_out] {
                ids.extend([lin.weight, lin.bias]);
            }
            ids.extend([l.ffn_norm.gain, l.ffn_norm.bias]);
        }
        ids
    }
}
