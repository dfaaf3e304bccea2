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

use super::*;
use std::path::PathBuf;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn conll_single_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let c = read_conll(write(&dir, "a.tsv", "Aspirin B-Chemical\n.\tO\n\n")).unwrap();
    assert_eq!(c.examples.len(), 1);
    assert_eq!(c.examples[0].words, vec!["Aspirin", "."]);
    assert_eq!(c.examples[0].tags, vec!["B-Chemical", "O"]);
}

#[test]
fn conll_two_sentences_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = read_conll(write(&dir, "a.tsv", "-DOCSTART-\tO\n\na\tO\nb\tB-X\n\n\nc\tI-Y\n")).unwrap();
    assert_eq!(c.examples.len(), 2);
    assert_eq!(c.bio_violations, 1);

    let err = read_conll(write(&dir, "b.tsv", "a\tO\nb B-X extra\n")).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    let err = read_conll(write(&dir, "c.tsv", "a\tO\nb\tE-X\n")).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn conll_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let original = "Aspirin\tB-Chemical\ninduced\tO\nasthma\tB-Disease\n.\tO\n\nNo\tO\neffect\tO\n\n";
    let corpus = read_conll(write(&dir, "a.tsv", original)).unwrap();
    let mut out = Vec::new();
    write_conll(&mut out, &corpus.examples).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), original);
    // space-separated input normalizes to tabs
    let spaced = read_conll(write(&dir, "b.tsv", &original.replace('\t', " "))).unwrap();
    assert_eq!(spaced.examples, corpus.examples);
}

#[test]
fn tag_set_is_frozen_from_training() {
    let ex = |tags: &[&str]| NerExample {
        words: tags.iter().map(|_| "w".to_string()).collect(),
        tags: tags.iter().map(|s| s.to_string()).collect(),
    };
    let set = TagSet::from_examples(&[ex(&["B-X", "I-X", "O"]), ex(&["B-A"])]);
    assert_eq!(set.tags, vec!["O", "B-A", "B-X", "I-X"]);
    assert!(matches!(set.id("I-A"), Err(Error::UnknownLabel { .. })));
}

#[test]
fn relation_label_sets() {
    let chemprot = LabelSet::chemprot().all();
    assert_eq!(chemprot, vec!["CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9", "false"]);
    assert_eq!(LabelSet::ddi().all(), vec!["effect", "mechanism", "advice", "int", "negative"]);
}

#[test]
fn relation_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "re.tsv", "id\tsentence\tlabel\n1\t@CHEMICAL$ inhibits @GENE$ .\tCPR:4\n2\tno link\tfalse\n");
    let ex = read_re_tsv(&path, &LabelSet::chemprot()).unwrap();
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].label, "CPR:4");
    let bad = write(&dir, "bad.tsv", "1\ts\tCPR:1\n");
    match read_re_tsv(&bad, &LabelSet::chemprot()) {
        Err(Error::UnknownLabel { label, admissible }) => {
            assert_eq!(label, "CPR:1");
            assert_eq!(admissible.len(), 6);
        }
        other => panic!("{other:?}"),
    }
    let empty = write(&dir, "empty.tsv", "");
    assert!(read_re_tsv(&empty, &LabelSet::ddi()).unwrap().is_empty());
    let dup = write(&dir, "dup.tsv", "1\ta\tint\n1\tb\tint\n");
    assert!(matches!(read_re_tsv(&dup, &LabelSet::ddi()), Err(Error::DuplicateId(_))));
}

fn squad_json(pairs: &[(&str, &str, &str, &str, usize)]) -> String {
    let paragraphs: Vec<serde_json::Value> = pairs
        .iter()
        .map(|(id, q, ctx, ans, start)| {
            serde_json::json!({"context": ctx, "qas": [{"id": id, "question": q, "answers": [{"text": ans, "answer_start": start}]}]})
        })
        .collect();
    serde_json::json!({"version": "1.1", "data": [{"title": "t", "paragraphs": paragraphs}]}).to_string()
}

#[test]
fn squad_minimal_and_misaligned() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(&dir, "ok.json", &squad_json(&[("q1", "What?", "Aspirin treats pain.", "pain", 15)]));
    let qs = read_squad(&ok).unwrap();
    assert_eq!(qs.len(), 1);
    assert_eq!(qs[0].synonyms(), vec!["pain"]);
    let bad = write(&dir, "bad.json", &squad_json(&[("q1", "What?", "Aspirin treats pain.", "pain", 14)]));
    assert!(matches!(read_squad(&bad), Err(Error::AnswerMismatch { ref id, .. }) if id == "q1"));
}

#[test]
fn squad_offsets_count_characters() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(&dir, "ok.json", &squad_json(&[("q", "?", "β-blocker and x", "x", 14)]));
    assert_eq!(read_squad(&ok).unwrap()[0].contexts[0].answers[0].start, 14);
}

#[test]
fn bioasq_regroups_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "b.json",
        &squad_json(&[
            ("55aa_001", "Which gene?", "BRCA1 is a gene.", "BRCA1", 0),
            ("55aa_002", "Which gene?", "It is BRCA1.", "BRCA1", 6),
            ("66bb_001", "Which drug?", "Use aspirin.", "aspirin", 4),
        ]),
    );
    let qs = read_bioasq(&path, Some("1")).unwrap();
    assert_eq!(qs.len(), 2);
    assert_eq!(qs[0].id, "55aa");
    assert_eq!(qs[0].contexts.len(), 2);
    assert_eq!(qs[0].synonyms(), vec!["BRCA1"]);
    assert_eq!(qs[1].batch.as_deref(), Some("1"));
    let counts = qa_counts(&qs);
    assert_eq!((counts.examples, counts.classes["pairs"]), (2, 3));
    assert_eq!(bioasq_question_id("abc"), "abc");
    assert_eq!(bioasq_question_id("a_b"), "a_b");
}

#[test]
fn squad_write_read_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(&dir, "b.json", &squad_json(&[("x_1", "q?", "ctx a", "a", 4), ("x_2", "q?", "a ctx", "a", 0)]));
    let qs = read_bioasq(&src, None).unwrap();
    let out = dir.path().join("out.json");
    write_squad(&out, &qs).unwrap();
    assert_eq!(read_bioasq(&out, None).unwrap(), qs);
}

#[test]
fn prediction_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let qa = vec![("b".to_string(), vec!["x".to_string(), "y".to_string()]), ("a".to_string(), vec![])];
    let path = dir.path().join("qa.json");
    write_qa_predictions(&path, &qa).unwrap();
    let mut sorted = qa.clone();
    sorted.sort();
    assert_eq!(read_qa_predictions(&path).unwrap(), sorted);
    let labels = vec![("1".to_string(), "CPR:3".to_string())];
    let path = dir.path().join("re.tsv");
    write_label_predictions(&path, &labels).unwrap();
    assert_eq!(read_label_predictions(&path).unwrap(), labels);
}

#[test]
fn pretraining_corpus_documents() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "a.txt", "s one\ns two\n\n\ns three\n");
    write(&dir, "b.txt", "");
    let docs = stream_pretrain_corpus(dir.path(), None).unwrap();
    assert_eq!(docs, vec![vec!["s one".to_string(), "s two".to_string()], vec!["s three".to_string()]]);
    let empty = stream_pretrain_corpus(dir.path().join("b.txt"), None).unwrap();
    assert!(empty.is_empty());
    assert!(matches!(stream_pretrain_corpus(dir.path().join("missing"), None), Err(Error::Io { .. })));

    let many: Vec<Document> = (0..20).map(|i| vec![format!("s{i}")]).collect();
    let path = dir.path().join("many");
    fs::create_dir(&path).unwrap();
    write_pretrain_corpus(path.join("c.txt"), &many).unwrap();
    let a = stream_pretrain_corpus(&path, Some(3)).unwrap();
    let b = stream_pretrain_corpus(&path, Some(3)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, many);
    let mut sorted = a.clone();
    sorted.sort();
    let mut expected = many.clone();
    expected.sort();
    assert_eq!(sorted, expected);
}

/// Split sizes of the published BioASQ factoid training file, checked only when the file is
/// supplied through `RTD_BIOASQ_TRAIN`.
#[test]
fn published_bioasq_counts_when_available() {
    let Some(path) = std::env::var_os("RTD_BIOASQ_TRAIN") else {
        eprintln!("RTD_BIOASQ_TRAIN not set; skipping");
        return;
    };
    let qs = read_bioasq(path, None).unwrap();
    let counts = qa_counts(&qs);
    assert_eq!((counts.examples, counts.classes["pairs"]), (556, 5537));
}
