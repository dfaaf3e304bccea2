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

//! Central finite-difference verification of reverse-mode gradients at 64-bit precision.

use super::{Graph, ParamStore, Tensor, Var};
use crate::Result;

/// Summary of a gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-6)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheck {
    fn merge(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        self.max_rel_error = self.max_rel_error.max((analytic - numeric).abs() / denom);
        self.checked += 1;
    }
}

fn sample_indices(numel: usize, max: usize) -> Vec<usize> {
    if numel <= max {
        return (0..numel).collect();
    }
    let stride = numel / max;
    (0..max).map(|i| (i * stride + i % stride.max(1)) % numel).collect()
}

/// Compares the backward pass of `f` against central differences for every input entry (or up
/// to `max_per_input` evenly spread entries of each input).
pub fn check_inputs<F>(inputs: &[Tensor<f64>], f: F, h: f64, max_per_input: usize) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.of(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in sample_indices(inputs[k].numel(), max_per_input) {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            report.merge(analytic.data()[i], (plus - minus) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Same as [`check_inputs`] for a model whose parameters live in a store.
pub fn check_store<F>(store: &ParamStore<f64>, f: F, h: f64, max_per_param: usize) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let grads = g.backward(loss)?.param_grads(store);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
    };
    let mut work = store.clone();
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        Ok(g.value(out).item())
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for i in sample_indices(store.value(id).numel(), max_per_param) {
            let orig = work.value(id).data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig;
            report.merge(grads.get(id).data()[i], (plus - minus) / (2.0 * h));
        }
    }
    Ok(report)
}
