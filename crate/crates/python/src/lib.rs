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

//! Python bindings: metrics, the score-ratio table, tokenization and checkpoint inspection.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rtd_core::checkpoint::Checkpoint;
use rtd_core::metrics::{self, GoldQuestion, MrrEntry, PrfReport};
use rtd_core::tokenizer::{self, Vocabulary};

fn py_err(e: rtd_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn prf_dict<'py>(py: Python<'py>, r: &PrfReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("f1", r.f1)?;
    d.set_item("tp", r.tp)?;
    d.set_item("fp", r.fp)?;
    d.set_item("fn", r.fn_)?;
    Ok(d)
}

/// Harmonic mean of two percentages.
#[pyfunction]
fn f1(precision: f64, recall: f64) -> f64 {
    metrics::f1(precision, recall)
}

#[pyfunction]
fn round_to(x: f64, decimals: i32) -> f64 {
    metrics::round_to(x, decimals)
}

/// BIO chunks as `(start, end_inclusive, kind)` tuples.
#[pyfunction]
fn extract_chunks(tags: Vec<String>) -> Vec<(usize, usize, String)> {
    metrics::extract_chunks(&tags).into_iter().map(|c| (c.start, c.end, c.kind)).collect()
}

/// Entity-level exact-match P/R/F over aligned tag sequences.
#[pyfunction]
fn entity_prf<'py>(py: Python<'py>, gold: Vec<Vec<String>>, pred: Vec<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::entity_prf_from_tags(&gold, &pred).map_err(py_err)?;
    prf_dict(py, &r)
}

/// Micro-averaged relation P/R/F; the negative class never counts as a hit.
#[pyfunction]
fn relation_prf<'py>(
    py: Python<'py>,
    gold: Vec<String>,
    pred: Vec<String>,
    positive: Vec<String>,
    negative: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let positive: Vec<&str> = positive.iter().map(String::as_str).collect();
    let r = metrics::relation_prf(&gold, &pred, &positive, negative).map_err(py_err)?;
    prf_dict(py, &r)
}

/// Strict accuracy, lenient accuracy and MRR. `gold` holds `(id, synonyms)` pairs and
/// `predictions` holds `(id, ranked answers)` pairs.
#[pyfunction]
#[pyo3(signature = (gold, predictions, case_sensitive = false))]
fn qa_metrics<'py>(
    py: Python<'py>,
    gold: Vec<(String, Vec<String>)>,
    predictions: Vec<(String, Vec<String>)>,
    case_sensitive: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let gold: Vec<GoldQuestion> = gold.into_iter().map(|(id, synonyms)| GoldQuestion { id, synonyms }).collect();
    let r = metrics::qa_metrics(&gold, &predictions, case_sensitive).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("sacc", r.sacc)?;
    d.set_item("lacc", r.lacc)?;
    d.set_item("mrr", r.mrr)?;
    d.set_item("questions", r.questions)?;
    Ok(d)
}

/// Per-batch MRR ratios against the batch best. Takes `(batch, competitor, mrr)` rows and returns
/// `{competitor: {"ratios": [...], "total": float}}` with `None` for missed batches.
#[pyfunction]
fn score_table<'py>(py: Python<'py>, rows: Vec<(String, String, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let entries: Vec<MrrEntry> = rows
        .into_iter()
        .map(|(batch, competitor, mrr)| MrrEntry { batch, competitor, mrr })
        .collect();
    let table = metrics::score_table(&entries).map_err(py_err)?;
    let out = PyDict::new(py);
    for (c, name) in table.competitors.iter().enumerate() {
        let row = PyDict::new(py);
        row.set_item("ratios", table.ratios[c].clone())?;
        row.set_item("total", table.totals[c])?;
        out.set_item(name, row)?;
    }
    Ok(out)
}

/// Number of positions masked among `n` maskable tokens.
#[pyfunction]
#[pyo3(signature = (n, rate = rtd_core::rtd::DEFAULT_MASK_RATE))]
fn masked_count(n: usize, rate: f64) -> usize {
    rtd_core::rtd::masked_count(n, rate)
}

/// WordPiece tokenizer over a fixed vocabulary.
#[pyclass]
struct Tokenizer {
    vocab: Vocabulary,
}

#[pymethods]
impl Tokenizer {
    #[new]
    fn new(tokens: Vec<String>) -> PyResult<Self> {
        Ok(Tokenizer {
            vocab: Vocabulary::from_tokens(tokens).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Tokenizer {
            vocab: Vocabulary::from_file(path).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.vocab.len()
    }

    fn pre_tokenize(&self, text: &str) -> Vec<String> {
        tokenizer::pre_tokenize(text)
    }

    /// Subword ids of one pre-tokenized word.
    fn word_ids(&self, word: &str) -> Vec<usize> {
        tokenizer::word_to_ids(word, &self.vocab)
    }

    /// `[CLS] a [SEP] (b [SEP])` padded to `max_len`.
    #[pyo3(signature = (words_a, words_b = None, max_len = 128))]
    fn encode<'py>(
        &self,
        py: Python<'py>,
        words_a: Vec<String>,
        words_b: Option<Vec<String>>,
        max_len: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let e = tokenizer::encode(&words_a, words_b.as_deref(), &self.vocab, max_len).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("ids", e.ids)?;
        d.set_item("tokens", e.tokens)?;
        // Vec<u8> would convert to `bytes`; expose plain int lists.
        let ints = |v: &[u8]| v.iter().map(|&x| u32::from(x)).collect::<Vec<_>>();
        d.set_item("segment_ids", ints(&e.segment_ids))?;
        d.set_item("attention_mask", ints(&e.attention_mask))?;
        d.set_item("word_map", e.word_map)?;
        Ok(d)
    }
}

/// The JSON manifest of a checkpoint file.
#[pyfunction]
fn checkpoint_manifest(path: &str) -> PyResult<String> {
    let ck = Checkpoint::load(path).map_err(py_err)?;
    serde_json::to_string(&ck.manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn rtd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(round_to, m)?)?;
    m.add_function(wrap_pyfunction!(extract_chunks, m)?)?;
    m.add_function(wrap_pyfunction!(entity_prf, m)?)?;
    m.add_function(wrap_pyfunction!(relation_prf, m)?)?;
    m.add_function(wrap_pyfunction!(qa_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(score_table, m)?)?;
    m.add_function(wrap_pyfunction!(masked_count, m)?)?;
    m.add_function(wrap_pyfunction!(checkpoint_manifest, m)?)?;
    m.add_class::<Tokenizer>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_exposes_metrics_and_tokenizer() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "rtd_py").unwrap();
            rtd_py(&m).unwrap();
            let f: f64 = m.getattr("f1").unwrap().call1((88.76, 91.34)).unwrap().extract().unwrap();
            assert!((f - 90.03).abs() < 0.005);
            let chunks: Vec<(usize, usize, String)> = m
                .getattr("extract_chunks")
                .unwrap()
                .call1((vec!["B-X", "I-X", "O"],))
                .unwrap()
                .extract()
                .unwrap();
            assert_eq!(chunks, vec![(0, 1, "X".to_string())]);
            let tok = m
                .getattr("Tokenizer")
                .unwrap()
                .call1((vec!["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "fever"],))
                .unwrap();
            let enc = tok.call_method1("encode", (vec!["fever"],)).unwrap();
            let mask: Vec<u32> = enc.get_item("attention_mask").unwrap().extract().unwrap();
            assert_eq!(mask.len(), 128);
            assert_eq!(&mask[..4], &[1, 1, 1, 0]);
            let err = m.getattr("relation_prf").unwrap().call1((vec!["C"], vec!["A"], vec!["A"], "none"));
            assert!(err.unwrap_err().is_instance_of::<PyValueError>(py));
        });
    }
}
