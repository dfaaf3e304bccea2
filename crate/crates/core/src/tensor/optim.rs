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

use serde::{Deserialize, Serialize};

use super::params::{Gradients, Param, ParamGroup, ParamStore};
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Adam moments and decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    /// Pretraining optimizer settings.
    pub const PRETRAIN: AdamConfig = AdamConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-6,
        weight_decay: 0.01,
    };

    /// Fine-tuning optimizer settings (no weight decay).
    pub const FINETUNE: AdamConfig = AdamConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-6,
        weight_decay: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    /// Number of completed steps.
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One Adam update with bias correction and decoupled weight decay:
/// `θ ← θ − lr·(m̂/(√v̂+ε) + wd·θ)`, where decay is skipped for parameters flagged exempt.
///
/// `lr` supplies the learning rate per parameter so that layerwise decay can be applied. No
/// parameter is modified when any gradient is non-finite.
pub fn adam_step<S: Scalar>(
    store: &mut ParamStore<S>,
    grads: &Gradients<S>,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
    lr: impl Fn(&Param<S>) -> f64,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Config(format!(
            "optimizer state covers {} parameters, gradients {}, store {}",
            state.m.len(),
            grads.len(),
            store.len()
        )));
    }
    for (id, p) in store.iter() {
        let g = grads.get(id);
        if g.shape() != p.value.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let (one_b1, one_b2) = (S::lit(1.0 - cfg.beta1), S::lit(1.0 - cfg.beta2));
    let (inv_bc1, inv_bc2) = (S::lit(1.0 / bc1), S::lit(1.0 / bc2));
    let eps = S::lit(cfg.eps);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let param = store.get_mut(id);
        let rate = lr(param);
        let step = S::lit(rate);
        let wd = if param.decay { S::lit(cfg.weight_decay) } else { S::zero() };
        let g = grads.get(id).data();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        for (i, theta) in param.value.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            let m_hat = m[i] * inv_bc1;
            let v_hat = v[i] * inv_bc2;
            *theta -= step * (m_hat / (v_hat.sqrt() + eps) + wd * *theta);
        }
    }
    state.t = t;
    Ok(())
}

/// Linear warmup to `base_lr` followed by linear decay to zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if warmup_steps > total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {warmup_steps} exceeds total steps {total_steps}"
            )));
        }
        Ok(LrSchedule {
            base_lr,
            warmup_steps,
            total_steps,
        })
    }

    /// Pretraining defaults: peak 2e-4 after 10k warmup steps, linear decay over 1M steps.
    pub fn pretrain_default() -> Self {
        LrSchedule {
            base_lr: 2e-4,
            warmup_steps: 10_000,
            total_steps: 1_000_000,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step > self.total_steps {
            log::warn!("step {step} is past the schedule end {}; using lr 0", self.total_steps);
            return 0.0;
        }
        if step <= self.warmup_steps {
            if self.warmup_steps == 0 {
                return self.base_lr;
            }
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        self.base_lr * (self.total_steps - step) as f64 / (self.total_steps - self.warmup_steps) as f64
    }
}

/// Per-group learning rates for layerwise decay: the top layer and the task head get the base
/// rate and every layer below is scaled by another factor of `decay`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerwiseLrs {
    pub head: f64,
    /// Indexed by zero-based layer, bottom first.
    pub layers: Vec<f64>,
    pub embeddings: f64,
}

impl LayerwiseLrs {
    pub fn new(base_lr: f64, decay: f64, num_layers: usize) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!("layerwise decay must lie in (0, 1], got {decay}")));
        }
        let layers = (0..num_layers)
            .map(|i| base_lr * decay.powi((num_layers - 1 - i) as i32))
            .collect();
        Ok(LayerwiseLrs {
            head: base_lr,
            layers,
            embeddings: base_lr * decay.powi(num_layers as i32 + 1),
        })
    }

    pub fn for_group(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Head => self.head,
            ParamGroup::Embeddings => self.embeddings,
            ParamGroup::Layer(i) => self.layers.get(i).copied().unwrap_or(self.head),
        }
    }
}
