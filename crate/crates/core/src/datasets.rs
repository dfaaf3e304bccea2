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

//! Corpus readers and writers: CoNLL-style NER files, relation TSVs, SQuAD-shaped QA JSON, and
//! the plain-text pretraining corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rtd::Document;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerExample {
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConllCorpus {
    pub examples: Vec<NerExample>,
    /// `I-t` tags that follow neither `B-t` nor `I-t`; left for the chunker to repair.
    pub bio_violations: usize,
}

fn valid_tag(tag: &str) -> bool {
    tag == "O"
        || tag
            .strip_prefix("B-")
            .or_else(|| tag.strip_prefix("I-"))
            .is_some_and(|kind| !kind.is_empty())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Reads `token<TAB or space>tag` lines with blank lines between sentences. `-DOCSTART-` lines
/// are skipped.
pub fn read_conll(path: impl AsRef<Path>) -> Result<ConllCorpus> {
    let path = path.as_ref();
    parse_conll(&read_lines(path)?, path)
}

fn parse_conll(lines: &[String], path: &Path) -> Result<ConllCorpus> {
    let mut corpus = ConllCorpus::default();
    let mut current = NerExample {
        words: Vec::new(),
        tags: Vec::new(),
    };
    let flush = |current: &mut NerExample, corpus: &mut ConllCorpus| {
        if !current.words.is_empty() {
            corpus.examples.push(std::mem::replace(
                current,
                NerExample {
                    words: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
    };
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current, &mut corpus);
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let fields: Vec<&str> = line.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, i + 1, format!("expected 2 fields, found {}", fields.len())));
        }
        let tag = fields[1];
        if !valid_tag(tag) {
            return Err(Error::parse(path, i + 1, format!("unknown tag {tag:?}")));
        }
        if let Some(kind) = tag.strip_prefix("I-") {
            let continues = current
                .tags
                .last()
                .is_some_and(|prev| prev.get(2..) == Some(kind) && prev != "O");
            if !continues {
                corpus.bio_violations += 1;
            }
        }
        current.words.push(fields[0].to_string());
        current.tags.push(tag.to_string());
    }
    flush(&mut current, &mut corpus);
    if corpus.bio_violations > 0 {
        log::warn!("{}: {} I- tags without a preceding chunk", path.display(), corpus.bio_violations);
    }
    Ok(corpus)
}

/// Writes `word\ttag` lines with a blank line after each sentence.
pub fn write_conll<W: Write>(out: &mut W, examples: &[NerExample]) -> std::io::Result<()> {
    for ex in examples {
        for (w, t) in ex.words.iter().zip(&ex.tags) {
            writeln!(out, "{w}\t{t}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_conll_file(path: impl AsRef<Path>, examples: &[NerExample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_conll(&mut buf, examples).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Tag inventory frozen from a training split, `O` first and the rest sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub tags: Vec<String>,
}

impl TagSet {
    pub fn from_examples(examples: &[NerExample]) -> Self {
        let mut set: Vec<String> = examples
            .iter()
            .flat_map(|e| e.tags.iter().cloned())
            .filter(|t| t != "O")
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        set.sort();
        let mut tags = vec!["O".to_string()];
        tags.extend(set);
        TagSet { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn id(&self, tag: &str) -> Result<usize> {
        self.tags.iter().position(|t| t == tag).ok_or_else(|| Error::UnknownLabel {
            label: tag.to_string(),
            admissible: self.tags.clone(),
        })
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }
}

/// A relation label inventory: positive classes plus one negative class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub positive: Vec<String>,
    pub negative: String,
}

impl LabelSet {
    pub fn new(positive: &[&str], negative: &str) -> Self {
        LabelSet {
            positive: positive.iter().map(|s| s.to_string()).collect(),
            negative: negative.to_string(),
        }
    }

    pub fn chemprot() -> Self {
        LabelSet::new(&["CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9"], "false")
    }

    pub fn ddi() -> Self {
        LabelSet::new(&["effect", "mechanism", "advice", "int"], "negative")
    }

    /// All labels, negative class last; class ids index into this list.
    pub fn all(&self) -> Vec<String> {
        let mut all = self.positive.clone();
        all.push(self.negative.clone());
        all
    }

    pub fn id(&self, label: &str) -> Result<usize> {
        let all = self.all();
        all.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_string(),
            admissible: all.clone(),
        })
    }

    pub fn positive_refs(&self) -> Vec<&str> {
        self.positive.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReExample {
    pub id: String,
    /// Sentence with both entity mentions already replaced by placeholders.
    pub sentence: String,
    pub label: String,
}

/// Reads `id\tsentence\tlabel` rows. A first row whose label column reads `label` is taken as a
/// header.
pub fn read_re_tsv(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Vec<ReExample>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, i + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        if i == 0 && fields[2] == "label" {
            continue;
        }
        labels.id(fields[2])?;
        if !ids.insert(fields[0].to_string()) {
            return Err(Error::DuplicateId(fields[0].to_string()));
        }
        out.push(ReExample {
            id: fields[0].to_string(),
            sentence: fields[1].to_string(),
            label: fields[2].to_string(),
        });
    }
    if out.is_empty() {
        log::warn!("{}: no relation examples", path.display());
    }
    Ok(out)
}

pub fn write_re_tsv(path: impl AsRef<Path>, examples: &[ReExample]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in examples {
        text.push_str(&format!("{}\t{}\t{}\n", e.id, e.sentence, e.label));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Two-column `id\tlabel` prediction file.
pub fn write_label_predictions(path: impl AsRef<Path>, predictions: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let text: String = predictions.iter().map(|(id, l)| format!("{id}\t{l}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_label_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.trim_end_matches('\r').split_once('\t') {
            Some((id, label)) => out.push((id.to_string(), label.to_string())),
            None => return Err(Error::parse(path, i + 1, "expected id<TAB>label")),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaAnswer {
    pub text: String,
    /// Character offset into the context.
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaContext {
    /// Id of the question-context pair as it appears in the file.
    pub pair_id: String,
    pub context: String,
    pub answers: Vec<QaAnswer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaQuestion {
    pub id: String,
    pub question: String,
    pub contexts: Vec<QaContext>,
    pub batch: Option<String>,
}

impl QaQuestion {
    /// Distinct gold answer strings across all contexts, in order of appearance.
    pub fn synonyms(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.contexts
            .iter()
            .flat_map(|c| c.answers.iter())
            .filter(|a| seen.insert(a.text.clone()))
            .map(|a| a.text.clone())
            .collect()
    }
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

fn read_squad_pairs(path: &Path) -> Result<Vec<(String, String, QaContext)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SquadFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let mut answers = Vec::with_capacity(qa.answers.len());
                for a in qa.answers {
                    let found: String = para.context.chars().skip(a.answer_start).take(a.text.chars().count()).collect();
                    if found != a.text {
                        return Err(Error::AnswerMismatch {
                            id: qa.id.clone(),
                            text: a.text,
                            start: a.answer_start,
                        });
                    }
                    answers.push(QaAnswer {
                        text: a.text,
                        start: a.answer_start,
                    });
                }
                out.push((
                    qa.id.clone(),
                    qa.question,
                    QaContext {
                        pair_id: qa.id,
                        context: para.context.clone(),
                        answers,
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// SQuAD v1.1 JSON: one question per question-context pair. Answer offsets are verified.
pub fn read_squad(path: impl AsRef<Path>) -> Result<Vec<QaQuestion>> {
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (id, question, ctx) in read_squad_pairs(path.as_ref())? {
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push(QaQuestion {
            id,
            question,
            contexts: vec![ctx],
            batch: None,
        });
    }
    Ok(out)
}

/// The question id shared by all pairs of one factoid question: the pair id without a trailing
/// `_<digits>` suffix.
pub fn bioasq_question_id(pair_id: &str) -> &str {
    match pair_id.rsplit_once('_') {
        Some((stem, suffix)) if !stem.is_empty() && !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) => stem,
        _ => pair_id,
    }
}

/// SQuAD-shaped BioASQ factoid data; question-context pairs are regrouped by question id.
pub fn read_bioasq(path: impl AsRef<Path>, batch: Option<&str>) -> Result<Vec<QaQuestion>> {
    let mut out: Vec<QaQuestion> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pair_ids = HashSet::new();
    for (pair_id, question, ctx) in read_squad_pairs(path.as_ref())? {
        if !pair_ids.insert(pair_id.clone()) {
            return Err(Error::DuplicateId(pair_id));
        }
        let qid = bioasq_question_id(&pair_id).to_string();
        match index.get(&qid) {
            Some(&i) => out[i].contexts.push(ctx),
            None => {
                index.insert(qid.clone(), out.len());
                out.push(QaQuestion {
                    id: qid,
                    question,
                    contexts: vec![ctx],
                    batch: batch.map(str::to_string),
                });
            }
        }
    }
    Ok(out)
}

/// Writes QA data back in the SQuAD shape, one paragraph per question-context pair.
pub fn write_squad(path: impl AsRef<Path>, questions: &[QaQuestion]) -> Result<()> {
    let path = path.as_ref();
    let paragraphs: Vec<serde_json::Value> = questions
        .iter()
        .flat_map(|q| {
            q.contexts.iter().map(move |c| {
                serde_json::json!({
                    "context": c.context,
                    "qas": [{
                        "id": c.pair_id,
                        "question": q.question,
                        "answers": c.answers.iter().map(|a| serde_json::json!({"text": a.text, "answer_start": a.start})).collect::<Vec<_>>(),
                    }],
                })
            })
        })
        .collect();
    let doc = serde_json::json!({"version": "1.1", "data": [{"title": "corpus", "paragraphs": paragraphs}]});
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Question id → ranked answers.
pub fn write_qa_predictions(path: impl AsRef<Path>, predictions: &[(String, Vec<String>)]) -> Result<()> {
    let path = path.as_ref();
    let map: BTreeMap<&str, &Vec<String>> = predictions.iter().map(|(id, a)| (id.as_str(), a)).collect();
    let text = serde_json::to_string_pretty(&map).expect("maps serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_qa_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<String>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(map.into_iter().collect())
}

/// Example and class counts of one split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub examples: usize,
    /// Entities per type (NER), examples per label (RE), or question-context pairs (QA).
    pub classes: BTreeMap<String, usize>,
}

pub fn ner_counts(examples: &[NerExample]) -> SplitCounts {
    let mut classes = BTreeMap::new();
    for e in examples {
        for c in crate::metrics::extract_chunks(&e.tags) {
            *classes.entry(c.kind).or_insert(0) += 1;
        }
    }
    SplitCounts {
        examples: examples.len(),
        classes,
    }
}

pub fn re_counts(examples: &[ReExample]) -> SplitCounts {
    let mut classes = BTreeMap::new();
    for e in examples {
        *classes.entry(e.label.clone()).or_insert(0) += 1;
    }
    SplitCounts {
        examples: examples.len(),
        classes,
    }
}

pub fn qa_counts(questions: &[QaQuestion]) -> SplitCounts {
    let pairs = questions.iter().map(|q| q.contexts.len()).sum();
    SplitCounts {
        examples: questions.len(),
        classes: BTreeMap::from([("pairs".to_string(), pairs)]),
    }
}

/// Streams documents from one text source: one sentence per line, blank lines between
/// documents.
pub struct DocumentStream<R> {
    lines: std::io::Lines<R>,
    done: bool,
}

impl<R: BufRead> DocumentStream<R> {
    pub fn new(reader: R) -> Self {
        DocumentStream {
            lines: reader.lines(),
            done: false,
        }
    }
}

impl<R: BufRead> Iterator for DocumentStream<R> {
    type Item = std::io::Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut doc = Vec::new();
        loop {
            match self.lines.next() {
                None => {
                    self.done = true;
                    return (!doc.is_empty()).then_some(Ok(doc));
                }
                Some(Err(e)) => return Some(Err(e)),
                Some(Ok(line)) => {
                    let line = line.trim();
                    if line.is_empty() {
                        if !doc.is_empty() {
                            return Some(Ok(doc));
                        }
                    } else {
                        doc.push(line.to_string());
                    }
                }
            }
        }
    }
}

/// Corpus files under `path`: the file itself, or every regular file of a directory in name
/// order.
pub fn corpus_files(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every document under `path`. When `shuffle_seed` is given the documents are shuffled
/// deterministically.
pub fn stream_pretrain_corpus(path: impl AsRef<Path>, shuffle_seed: Option<u64>) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for file in corpus_files(path)? {
        let handle = fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        let before = docs.len();
        for doc in DocumentStream::new(BufReader::new(handle)) {
            docs.push(doc.map_err(|e| Error::io(&file, e))?);
        }
        if docs.len() == before {
            log::warn!("{}: no documents", file.display());
        }
    }
    if let Some(seed) = shuffle_seed {
        docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(docs)
}

pub fn write_pretrain_corpus(path: impl AsRef<Path>, documents: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let text = documents
        .iter()
        .map(|d| d.iter().map(|s| format!("{s}\n")).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
#[path = "datasets_tests.rs"]
mod tests;
