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

//! The tape: every primitive evaluates eagerly and appends a node holding its output and
//! whatever it needs for the backward pass. Nodes are stored in execution order, so a reverse
//! sweep visits each node after all of its consumers.

use std::collections::HashMap;

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<S> {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: S },
    Gelu { a: Var },
    Softmax { a: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Dropout { a: Var, mask: Vec<S> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<S> },
    BceLogits { logits: Var, targets: Vec<S> },
    MaskedMean { a: Var, weights: Vec<S>, denom: S },
    Sum { a: Var },
    Reshape { a: Var },
    SwapAxes12 { a: Var },
    MaskKeys { a: Var, keep: Vec<bool>, heads: usize },
    SelectRows { a: Var, rows: Vec<usize> },
    SelectCol { a: Var, col: usize },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// A single-use record of one forward computation.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    bound: HashMap<ParamId, Var>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    let cols = shape.last().copied().unwrap_or(1);
    let rows = shape.iter().product::<usize>() / cols.max(1);
    (rows, cols)
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A tensor that receives no gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free variable that receives a gradient (used for gradient checks).
    pub fn variable(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter. Binding the same id twice yields the same node, so gradients
    /// from every use of a shared parameter accumulate in one place.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.bound.insert(id, v);
        v
    }

    /// `a · b` for rank-2 operands, or batched over the leading axis for rank-3 operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` where `b` is stored untransposed.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let op = if trans_b { "matmul_t" } else { "matmul" };
        let (batch, m, k, n) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [r, c]) => {
                let (kb, n) = if trans_b { (*c, *r) } else { (*r, *c) };
                if *k != kb {
                    return Err(shape_err(op, &sa, &sb));
                }
                (1, *m, *k, n)
            }
            ([ba, m, k], [bb, r, c]) if ba == bb => {
                let (kb, n) = if trans_b { (*c, *r) } else { (*r, *c) };
                if *k != kb {
                    return Err(shape_err(op, &sa, &sb));
                }
                (*ba, *m, *k, n)
            }
            _ => return Err(shape_err(op, &sa, &sb)),
        };
        let mut out = vec![S::zero(); batch * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                S::gemm(
                    m,
                    k,
                    n,
                    &da[i * m * k..(i + 1) * m * k],
                    false,
                    &db[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, trans_b }, needs))
    }

    fn check_suffix(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    /// Elementwise sum; `b` may have a shape equal to a suffix of `a`'s shape (broadcast).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_suffix("add", a, b)?;
        let vb = self.value(b).data();
        let nb = vb.len();
        let out: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vb[i % nb])
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }, needs))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_suffix("mul", a, b)?;
        let vb = self.value(b).data();
        let nb = vb.len();
        let out: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * vb[i % nb])
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let out: Vec<S> = self.value(a).data().iter().map(|&x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Tensor { shape, data: out }, Op::Scale { a, factor }, needs)
    }

    /// Exact (erf based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let half = S::lit(0.5);
        let inv_sqrt2 = S::lit(1.0 / SQRT_2);
        let out: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| half * x * (S::one() + (x * inv_sqrt2).erf()))
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Tensor { shape, data: out }, Op::Gelu { a }, needs)
    }

    /// Softmax over the last axis. Rows that are entirely `-inf` produce zeros.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (rows, cols) = rows_cols(self.shape(a));
        let src = self.value(a).data();
        let mut out = vec![S::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let dst = &mut out[r * cols..(r + 1) * cols];
            softmax_row(row, dst);
        }
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Tensor { shape, data: out }, Op::Softmax { a }, needs)
    }

    /// Per-position normalization over the last axis followed by a learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(shape_err("layer_norm", self.shape(x), self.shape(gain)));
        }
        let (rows, _) = rows_cols(self.shape(x));
        let src = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = vec![S::zero(); src.len()];
        let mut xhat = vec![S::zero(); src.len()];
        let mut inv_std = vec![S::zero(); rows];
        let dn = S::lit(d as f64);
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<S>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
            let is = S::one() / (var + S::lit(eps)).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    /// Inverted dropout: kept activations are scaled by `1/(1-p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = S::lit(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { S::zero() } else { keep })
            .collect();
        let out: Vec<S> = self.value(a).data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(Tensor { shape, data: out }, Op::Dropout { a, mask }, needs)
    }

    /// Gathers rows of a `[V, E]` table, producing `[ids.len(), E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        let [v, e] = shape[..] else {
            return Err(shape_err("embedding", &shape, &[ids.len()]));
        };
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * e);
        for (position, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(Error::TokenOutOfRange {
                    id,
                    position,
                    vocab_size: v,
                });
            }
            out.extend_from_slice(&src[id * e..(id + 1) * e]);
        }
        let needs = self.needs(table);
        Ok(self.push(
            Tensor {
                shape: vec![ids.len(), e],
                data: out,
            },
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Per-row categorical cross-entropy of `[N, C]` logits against class indices; output `[N]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (rows, cols) = rows_cols(&shape);
        if shape.len() != 2 || targets.len() != rows {
            return Err(shape_err("cross_entropy", &shape, &[targets.len()]));
        }
        if let Some(position) = targets.iter().position(|&t| t >= cols) {
            return Err(Error::TokenOutOfRange {
                id: targets[position],
                position,
                vocab_size: cols,
            });
        }
        let src = self.value(logits).data();
        let mut probs = vec![S::zero(); src.len()];
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
            for j in 0..cols {
                probs[r * cols + j] = (row[j] - lse).exp();
            }
            out.push(lse - row[targets[r]]);
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor {
                shape: vec![rows],
                data: out,
            },
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// Per-element binary cross-entropy of logits against 0/1 targets (same shape as logits).
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[S]) -> Result<Var> {
        let n = self.value(logits).numel();
        if targets.len() != n {
            return Err(shape_err("bce_with_logits", self.shape(logits), &[targets.len()]));
        }
        let out: Vec<S> = self
            .value(logits)
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(S::zero()) - z * y + (S::one() + (-z.abs()).exp()).ln())
            .collect();
        let shape = self.shape(logits).to_vec();
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// `Σ wᵢ aᵢ / Σ wᵢ` as a scalar; zero when all weights are zero.
    pub fn masked_mean(&mut self, a: Var, weights: &[S]) -> Result<Var> {
        let n = self.value(a).numel();
        if weights.len() != n {
            return Err(shape_err("masked_mean", self.shape(a), &[weights.len()]));
        }
        let denom: S = weights.iter().copied().sum();
        let value = if denom > S::zero() {
            self.value(a)
                .data()
                .iter()
                .zip(weights)
                .map(|(&x, &w)| x * w)
                .sum::<S>()
                / denom
        } else {
            S::zero()
        };
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::scalar(value),
            Op::MaskedMean {
                a,
                weights: weights.to_vec(),
                denom,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<S>();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, needs)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape { a }, needs))
    }

    /// `[A, B, C, D] → [A, C, B, D]`.
    pub fn swap_axes12(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [d0, d1, d2, d3] = shape[..] else {
            return Err(shape_err("swap_axes12", &shape, &[]));
        };
        let out = swap12(self.value(a).data(), d0, d1, d2, d3);
        let needs = self.needs(a);
        Ok(self.push(
            Tensor {
                shape: vec![d0, d2, d1, d3],
                data: out,
            },
            Op::SwapAxes12 { a },
            needs,
        ))
    }

    /// Sets attention scores `[B*heads, Tq, Tk]` to `-inf` wherever the key is padding.
    /// `keep` has one flag per `(batch, key)` pair.
    pub fn mask_keys(&mut self, a: Var, keep: &[bool], heads: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [bh, tq, tk] = shape[..] else {
            return Err(shape_err("mask_keys", &shape, &[keep.len()]));
        };
        if heads == 0 || bh % heads != 0 || keep.len() != (bh / heads) * tk {
            return Err(shape_err("mask_keys", &shape, &[keep.len()]));
        }
        let mut out = self.value(a).data().to_vec();
        for (i, x) in out.iter_mut().enumerate() {
            let b = i / (heads * tq * tk);
            if !keep[b * tk + i % tk] {
                *x = S::neg_infinity();
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::MaskKeys {
                a,
                keep: keep.to_vec(),
                heads,
            },
            needs,
        ))
    }

    /// Gathers rows of a rank-2 tensor.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [n, d] = shape[..] else {
            return Err(shape_err("select_rows", &shape, &[rows.len()]));
        };
        if rows.iter().any(|&r| r >= n) {
            return Err(shape_err("select_rows", &shape, &[rows.len()]));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor {
                shape: vec![rows.len(), d],
                data: out,
            },
            Op::SelectRows {
                a,
                rows: rows.to_vec(),
            },
            needs,
        ))
    }

    /// Column `col` of an `[N, C]` tensor as `[N]`.
    pub fn select_col(&mut self, a: Var, col: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [n, c] = shape[..] else {
            return Err(shape_err("select_col", &shape, &[col]));
        };
        if col >= c {
            return Err(shape_err("select_col", &shape, &[col]));
        }
        let src = self.value(a).data();
        let out: Vec<S> = (0..n).map(|r| src[r * c + col]).collect();
        let needs = self.needs(a);
        Ok(self.push(Tensor { shape: vec![n], data: out }, Op::SelectCol { a, col }, needs))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads<S>> {
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 || !shape.iter().all(|&d| d == 1) {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(shape.to_vec(), S::one()));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads {
            grads,
            bound: self.bound.clone(),
        })
    }

    fn backward_node(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        let mut acc = |v: Var, data: Vec<S>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let shape = self.nodes[v.0].value.shape().to_vec();
            match &mut grads[v.0] {
                Some(t) => {
                    for (a, b) in t.data.iter_mut().zip(data) {
                        *a += b;
                    }
                }
                slot => *slot = Some(Tensor { shape, data }),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, trans_b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (va.shape(), vb.shape());
                let batch = if sa.len() == 3 { sa[0] } else { 1 };
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = if *trans_b { sb[sb.len() - 2] } else { sb[sb.len() - 1] };
                if self.needs(*a) {
                    let mut da = vec![S::zero(); va.numel()];
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let bi = &vb.data()[i * k * n..(i + 1) * k * n];
                        // trans_b: dA = dC·B ; else dA = dC·Bᵀ
                        S::gemm(m, n, k, gi, false, bi, !*trans_b, &mut da[i * m * k..(i + 1) * m * k], false);
                    }
                    acc(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![S::zero(); vb.numel()];
                    for i in 0..batch {
                        let gi = &gd[i * m * n..(i + 1) * m * n];
                        let ai = &va.data()[i * m * k..(i + 1) * m * k];
                        let dst = &mut db[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // dB[n,k] = dCᵀ·A
                            S::gemm(n, m, k, gi, true, ai, false, dst, false);
                        } else {
                            // dB[k,n] = Aᵀ·dC
                            S::gemm(k, m, n, ai, true, gi, false, dst, false);
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::Add { a, b } => {
                acc(*a, gd.to_vec());
                if self.needs(*b) {
                    let nb = self.value(*b).numel();
                    let mut db = vec![S::zero(); nb];
                    for (i, &x) in gd.iter().enumerate() {
                        db[i % nb] += x;
                    }
                    acc(*b, db);
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let nb = vb.len();
                if self.needs(*a) {
                    acc(*a, gd.iter().enumerate().map(|(i, &x)| x * vb[i % nb]).collect());
                }
                if self.needs(*b) {
                    let mut db = vec![S::zero(); nb];
                    for (i, &x) in gd.iter().enumerate() {
                        db[i % nb] += x * va[i];
                    }
                    acc(*b, db);
                }
            }
            Op::Scale { a, factor } => acc(*a, gd.iter().map(|&x| x * *factor).collect()),
            Op::Gelu { a } => {
                let half = S::lit(0.5);
                let inv_sqrt2 = S::lit(1.0 / SQRT_2);
                let c = S::lit(INV_SQRT_2PI);
                let da = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&x, &gy)| {
                        let cdf = half * (S::one() + (x * inv_sqrt2).erf());
                        let pdf = c * (-half * x * x).exp();
                        gy * (cdf + x * pdf)
                    })
                    .collect();
                acc(*a, da);
            }
            Op::Softmax { a } => {
                let y = node.value.data();
                let (rows, cols) = rows_cols(node.value.shape());
                let mut da = vec![S::zero(); y.len()];
                for r in 0..rows {
                    let range = r * cols..(r + 1) * cols;
                    let dot: S = y[range.clone()].iter().zip(&gd[range.clone()]).map(|(&p, &q)| p * q).sum();
                    for j in range {
                        da[j] = y[j] * (gd[j] - dot);
                    }
                }
                acc(*a, da);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain).data();
                let d = gv.len();
                let rows = inv_std.len();
                if self.needs(*gain) {
                    let mut dg = vec![S::zero(); d];
                    for (i, &gy) in gd.iter().enumerate() {
                        dg[i % d] += gy * xhat[i];
                    }
                    acc(*gain, dg);
                }
                if self.needs(*bias) {
                    let mut db = vec![S::zero(); d];
                    for (i, &gy) in gd.iter().enumerate() {
                        db[i % d] += gy;
                    }
                    acc(*bias, db);
                }
                if self.needs(*x) {
                    let dn = S::lit(d as f64);
                    let mut dx = vec![S::zero(); gd.len()];
                    for r in 0..rows {
                        let mut sum_dh = S::zero();
                        let mut sum_dh_h = S::zero();
                        for j in 0..d {
                            let dh = gd[r * d + j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[r * d + j];
                        }
                        for j in 0..d {
                            let dh = gd[r * d + j] * gv[j];
                            dx[r * d + j] = inv_std[r] / dn * (dn * dh - sum_dh - xhat[r * d + j] * sum_dh_h);
                        }
                    }
                    acc(*x, dx);
                }
            }
            Op::Dropout { a, mask } => acc(*a, gd.iter().zip(mask).map(|(&x, &m)| x * m).collect()),
            Op::Embedding { table, ids } => {
                let e = self.value(*table).last_dim();
                let mut dt = vec![S::zero(); self.value(*table).numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..e {
                        dt[id * e + j] += gd[r * e + j];
                    }
                }
                acc(*table, dt);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let cols = self.value(*logits).last_dim();
                let mut dl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    dl[r * cols + t] -= S::one();
                    for x in &mut dl[r * cols..(r + 1) * cols] {
                        *x *= gd[r];
                    }
                }
                acc(*logits, dl);
            }
            Op::BceLogits { logits, targets } => {
                let dl = self
                    .value(*logits)
                    .data()
                    .iter()
                    .zip(targets)
                    .zip(gd)
                    .map(|((&z, &y), &gy)| gy * (sigmoid(z) - y))
                    .collect();
                acc(*logits, dl);
            }
            Op::MaskedMean { a, weights, denom } => {
                let scale = if *denom > S::zero() { gd[0] / *denom } else { S::zero() };
                acc(*a, weights.iter().map(|&w| w * scale).collect());
            }
            Op::Sum { a } => {
                let n = self.value(*a).numel();
                acc(*a, vec![gd[0]; n]);
            }
            Op::Reshape { a } => acc(*a, gd.to_vec()),
            Op::SwapAxes12 { a } => {
                let s = node.value.shape();
                acc(*a, swap12(gd, s[0], s[1], s[2], s[3]));
            }
            Op::MaskKeys { a, keep, heads } => {
                let s = node.value.shape();
                let (tq, tk) = (s[1], s[2]);
                let da = gd
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let b = i / (heads * tq * tk);
                        if keep[b * tk + i % tk] {
                            x
                        } else {
                            S::zero()
                        }
                    })
                    .collect();
                acc(*a, da);
            }
            Op::SelectRows { a, rows } => {
                let d = self.value(*a).last_dim();
                let mut da = vec![S::zero(); self.value(*a).numel()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..d {
                        da[r * d + j] += gd[i * d + j];
                    }
                }
                acc(*a, da);
            }
            Op::SelectCol { a, col } => {
                let c = self.value(*a).last_dim();
                let mut da = vec![S::zero(); self.value(*a).numel()];
                for (r, &x) in gd.iter().enumerate() {
                    da[r * c + col] = x;
                }
                acc(*a, da);
            }
        }
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

fn softmax_row<S: Scalar>(row: &[S], dst: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        dst.fill(S::zero());
        return;
    }
    let mut total = S::zero();
    for (d, &x) in dst.iter_mut().zip(row) {
        *d = (x - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

fn swap12<S: Copy>(src: &[S], d0: usize, d1: usize, d2: usize, d3: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(src.len());
    for a in 0..d0 {
        for c in 0..d2 {
            for b in 0..d1 {
                let base = ((a * d1 + b) * d2 + c) * d3;
                out.extend_from_slice(&src[base..base + d3]);
            }
        }
    }
    out
}

/// Result of a backward pass.
pub struct Grads<S> {
    grads: Vec<Option<Tensor<S>>>,
    bound: HashMap<ParamId, Var>,
}

impl<S: Scalar> Grads<S> {
    /// Gradient with respect to a node, if any flowed to it.
    pub fn of(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    /// Gradients for every parameter of `store`, zero for parameters that were never bound or
    /// are unreachable from the loss.
    pub fn param_grads(mut self, store: &ParamStore<S>) -> Gradients<S> {
        let mut out = Gradients::zeros_like(store);
        for (id, v) in self.bound.drain() {
            if let Some(g) = self.grads[v.0].take() {
                out.grads[id.0] = g;
            }
        }
        out
    }
}

#[cfg(test)]
#[path = "graph_tests.rs"]
mod tests;
