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

//! Evaluation arithmetic: entity-level and relation-level P/R/F, factoid QA accuracy and MRR,
//! seed averaging, and per-batch score ratios.
//!
//! All percentages are kept unrounded; [`round_to`] is for display only.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of ranked answers considered per question.
pub const NBEST: usize = 5;

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// An entity span over word indices, `end` inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Tag<'_> {
    if let Some(kind) = tag.strip_prefix("B-") {
        Tag::Begin(kind)
    } else if let Some(kind) = tag.strip_prefix("I-") {
        Tag::Inside(kind)
    } else {
        Tag::Outside
    }
}

/// Maximal BIO chunks. A bare `I-t` that does not continue a chunk of type `t` opens a new one;
/// anything that is not `B-`/`I-` is treated as `O`.
pub fn extract_chunks<S: AsRef<str>>(tags: &[S]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let next = match parse_tag(tag.as_ref()) {
            Tag::Outside => None,
            Tag::Begin(kind) => Some((i, kind)),
            Tag::Inside(kind) => match open {
                Some((start, current)) if current == kind => Some((start, kind)),
                _ => Some((i, kind)),
            },
        };
        if let Some((start, kind)) = open {
            if next.map(|(s, _)| s) != Some(start) {
                chunks.push(Chunk {
                    start,
                    end: i - 1,
                    kind: kind.to_string(),
                });
            }
        }
        open = next;
    }
    if let Some((start, kind)) = open {
        chunks.push(Chunk {
            start,
            end: tags.len() - 1,
            kind: kind.to_string(),
        });
    }
    chunks
}

/// Renders non-overlapping chunks as a BIO sequence of length `len`.
pub fn chunks_to_tags(chunks: &[Chunk], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for c in chunks {
        tags[c.start] = format!("B-{}", c.kind);
        for tag in &mut tags[c.start + 1..=c.end] {
            *tag = format!("I-{}", c.kind);
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PrfReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(tp, tp + fp);
        let recall = pct(tp, tp + fn_);
        PrfReport {
            precision,
            recall,
            f1: f1(precision, recall),
            tp,
            fp,
            fn_,
        }
    }
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Exact-match entity scoring over aligned sentences.
pub fn entity_prf(gold: &[Vec<Chunk>], pred: &[Vec<Chunk>]) -> Result<PrfReport> {
    if gold.len() != pred.len() {
        return Err(Error::CountMismatch {
            what: "sentence",
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut n_gold, mut n_pred) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g: HashSet<&Chunk> = g.iter().collect();
        let p: HashSet<&Chunk> = p.iter().collect();
        tp += g.intersection(&p).count();
        n_gold += g.len();
        n_pred += p.len();
    }
    Ok(PrfReport::from_counts(tp, n_pred - tp, n_gold - tp))
}

/// [`entity_prf`] on tag sequences; each gold/predicted sentence pair must have equal length.
pub fn entity_prf_from_tags<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<PrfReport> {
    if gold.len() != pred.len() {
        return Err(Error::CountMismatch {
            what: "sentence",
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if let Some((g, p)) = gold.iter().zip(pred).find(|(g, p)| g.len() != p.len()) {
        return Err(Error::CountMismatch {
            what: "token",
            gold: g.len(),
            pred: p.len(),
        });
    }
    let g: Vec<Vec<Chunk>> = gold.iter().map(|t| extract_chunks(t)).collect();
    let p: Vec<Vec<Chunk>> = pred.iter().map(|t| extract_chunks(t)).collect();
    entity_prf(&g, &p)
}

/// Micro-averaged relation scoring. Labels outside `positive` ∪ {`negative`} are rejected; the
/// negative class never contributes true or false positives.
pub fn relation_prf<S: AsRef<str>>(gold: &[S], pred: &[S], positive: &[&str], negative: &str) -> Result<PrfReport> {
    if gold.len() != pred.len() {
        return Err(Error::CountMismatch {
            what: "example",
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let check = |label: &str| -> Result<bool> {
        if label == negative {
            Ok(false)
        } else if positive.contains(&label) {
            Ok(true)
        } else {
            let mut admissible: Vec<String> = positive.iter().map(|s| s.to_string()).collect();
            admissible.push(negative.to_string());
            Err(Error::UnknownLabel {
                label: label.to_string(),
                admissible,
            })
        }
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        let (g_pos, p_pos) = (check(g)?, check(p)?);
        if g == p {
            tp += usize::from(g_pos);
        } else {
            fp += usize::from(p_pos);
            fn_ += usize::from(g_pos);
        }
    }
    Ok(PrfReport::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub sacc: f64,
    pub lacc: f64,
    pub mrr: f64,
    pub questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldQuestion {
    pub id: String,
    /// Every acceptable surface form of the answer.
    pub synonyms: Vec<String>,
}

fn normalize_answer(s: &str, case_sensitive: bool) -> String {
    let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if case_sensitive {
        joined
    } else {
        joined.to_lowercase()
    }
}

/// 1-based rank of the first candidate among the top [`NBEST`] that matches a synonym.
pub fn answer_rank<S: AsRef<str>>(synonyms: &[String], candidates: &[S], case_sensitive: bool) -> Option<usize> {
    let gold: HashSet<String> = synonyms.iter().map(|s| normalize_answer(s, case_sensitive)).collect();
    candidates
        .iter()
        .take(NBEST)
        .position(|c| gold.contains(&normalize_answer(c.as_ref(), case_sensitive)))
        .map(|i| i + 1)
}

/// Strict accuracy, lenient accuracy and mean reciprocal rank, as percentages. A question with
/// no prediction entry counts as unanswered.
pub fn qa_metrics(
    gold: &[GoldQuestion],
    predictions: &[(String, Vec<String>)],
    case_sensitive: bool,
) -> Result<QaReport> {
    let mut by_id: HashMap<&str, &[String]> = HashMap::new();
    for (id, answers) in predictions {
        if by_id.insert(id, answers).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let (mut strict, mut lenient, mut rr) = (0usize, 0usize, 0.0);
    for q in gold {
        if !seen.insert(q.id.as_str()) {
            return Err(Error::DuplicateId(q.id.clone()));
        }
        let candidates = by_id.get(q.id.as_str()).copied().unwrap_or_else(|| {
            log::warn!("no prediction for question {}", q.id);
            &[]
        });
        if let Some(rank) = answer_rank(&q.synonyms, candidates, case_sensitive) {
            strict += usize::from(rank == 1);
            lenient += 1;
            rr += 1.0 / rank as f64;
        }
    }
    let n = gold.len();
    let pct = |x: f64| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    Ok(QaReport {
        sacc: pct(strict as f64),
        lacc: pct(lenient as f64),
        mrr: pct(rr),
        questions: n,
    })
}

/// Each competitor's MRR divided by the best MRR of the batch, and the per-competitor sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub batches: Vec<String>,
    pub competitors: Vec<String>,
    /// `ratios[c][b]`; `None` where the competitor did not take part in the batch.
    pub ratios: Vec<Vec<Option<f64>>>,
    pub totals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrEntry {
    pub batch: String,
    pub competitor: String,
    pub mrr: f64,
}

/// Builds the ratio table. Batches and competitors keep their first-appearance order.
pub fn score_table(entries: &[MrrEntry]) -> Result<ScoreTable> {
    let mut batches: Vec<String> = Vec::new();
    let mut competitors: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in entries {
        let b = index_of(&mut batches, &e.batch);
        let c = index_of(&mut competitors, &e.competitor);
        if !e.mrr.is_finite() || e.mrr < 0.0 {
            return Err(Error::Config(format!("invalid MRR {} for {} in batch {}", e.mrr, e.competitor, e.batch)));
        }
        if cells.insert((c, b), e.mrr).is_some() {
            return Err(Error::DuplicateId(format!("{} / batch {}", e.competitor, e.batch)));
        }
    }
    let mut ratios = vec![vec![None; batches.len()]; competitors.len()];
    for (b, batch) in batches.iter().enumerate() {
        let best = cells
            .iter()
            .filter(|((_, cb), _)| *cb == b)
            .map(|(_, &m)| m)
            .fold(0.0, f64::max);
        if best == 0.0 {
            log::warn!("batch {batch} has no positive MRR; its ratios are 0");
        }
        for ((c, cb), &m) in &cells {
            if *cb == b {
                ratios[*c][b] = Some(if best == 0.0 { 0.0 } else { m / best });
            }
        }
    }
    let totals = ratios.iter().map(|row| row.iter().flatten().sum()).collect();
    Ok(ScoreTable {
        batches,
        competitors,
        ratios,
        totals,
    })
}

fn index_of(list: &mut Vec<String>, item: &str) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.to_string());
            list.len() - 1
        }
    }
}

/// Mean of per-seed P/R/F. `f1_of_means` is the harmonic mean of the averaged P and R, which in
/// general differs from the averaged F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfAggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_of_means: f64,
    pub count: usize,
}

pub fn aggregate_prf(reports: &[PrfReport]) -> Result<PrfAggregate> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&PrfReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let (precision, recall) = (mean(|r| r.precision), mean(|r| r.recall));
    Ok(PrfAggregate {
        precision,
        recall,
        f1: mean(|r| r.f1),
        f1_of_means: f1(precision, recall),
        count: reports.len(),
    })
}

pub fn aggregate_qa(reports: &[QaReport]) -> Result<QaReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&QaReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(QaReport {
        sacc: mean(|r| r.sacc),
        lacc: mean(|r| r.lacc),
        mrr: mean(|r| r.mrr),
        questions: reports[0].questions,
    })
}

/// Plain-text P/R/F table, percentages to two decimals.
pub fn render_prf_table(rows: &[(String, PrfReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}\n", "run", "P", "R", "F");
    for (name, r) in rows {
        let _ = writeln!(out, "{name:<width$}  {:>6.2}  {:>6.2}  {:>6.2}", r.precision, r.recall, r.f1);
    }
    out
}

pub fn render_qa_table(rows: &[(String, QaReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}\n", "run", "SACC", "LACC", "MRR");
    for (name, r) in rows {
        let _ = writeln!(out, "{name:<width$}  {:>6.2}  {:>6.2}  {:>6.2}", r.sacc, r.lacc, r.mrr);
    }
    out
}

/// Ratio table with three decimals, `-` for missing cells.
pub fn render_score_table(table: &ScoreTable) -> String {
    let width = table.competitors.iter().map(|c| c.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{:<width$}", "competitor");
    for b in &table.batches {
        let _ = write!(out, "  {b:>7}");
    }
    out.push_str("    total\n");
    for (c, name) in table.competitors.iter().enumerate() {
        let _ = write!(out, "{name:<width$}");
        for cell in &table.ratios[c] {
            match cell {
                Some(r) => {
                    let _ = write!(out, "  {r:>7.3}");
                }
                None => out.push_str("        -"),
            }
        }
        let _ = writeln!(out, "  {:>7.3}", table.totals[c]);
    }
    out
}

#[cfg(test)]
#[path = "metrics_tests.rs"]
mod tests;
