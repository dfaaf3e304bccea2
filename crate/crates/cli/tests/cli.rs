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

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rtd_core::config::RunManifest;
use rtd_core::datasets::{self, LabelSet, ReExample};
use rtd_core::synthetic;

fn rtd<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_rtd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("rtd binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TINY_MODEL: [&str; 9] = [
    "num_layers=1",
    "hidden_size=32",
    "attention_heads=2",
    "attention_head_size=16",
    "ffn_inner_hidden_size=64",
    "embedding_size=32",
    "max_position_embeddings=32",
    "max_seq_length=32",
    "batch_size=8",
];

fn sets(pairs: &[&str]) -> Vec<String> {
    pairs.iter().flat_map(|p| ["--set".to_string(), p.to_string()]).collect()
}

fn pretrain(dir: &Path, out: &str, resume: Option<&Path>) -> PathBuf {
    let out = dir.join(out);
    let mut args: Vec<String> = vec!["pretrain".into()];
    args.extend(sets(&TINY_MODEL));
    args.extend(sets(&["train_steps=6", "warmup_steps=2", "save_every=3", "log_every=1", "learning_rate=1e-3"]));
    args.extend(["--corpus".into(), dir.join("corpus.txt").display().to_string()]);
    match resume {
        Some(ck) => args.extend(["--resume".into(), ck.display().to_string()]),
        None => args.extend(["--vocab".into(), dir.join("vocab.txt").display().to_string()]),
    }
    args.extend(["--out".into(), out.display().to_string()]);
    ok(rtd(&args));
    out
}

fn finetune(dir: &Path, init: &Path, task: &str, data: &Path, extra: &[&str], out: &str) -> PathBuf {
    let out = dir.join(out);
    let mut args: Vec<String> = vec!["finetune".into(), "--task".into(), task.into()];
    args.extend(sets(&["max_seq_length=32", "batch_size=8", "epochs=1", "document_stride=12", "learning_rate=1e-3"]));
    args.extend(["--init".into(), init.display().to_string(), "--data".into(), data.display().to_string()]);
    args.extend(["--seeds".into(), "2".into(), "--out".into(), out.display().to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    ok(rtd(&args));
    out
}

#[test]
fn pretrain_finetune_predict_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synthetic::word_vocab(200).write_file(dir.join("vocab.txt")).unwrap();
    datasets::write_pretrain_corpus(dir.join("corpus.txt"), &synthetic::topic_documents(24, 60, 1)).unwrap();

    // pretraining artifacts
    let run = pretrain(dir, "pretrain", None);
    let log = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 6);
    for f in ["checkpoints/step-3.ckpt", "checkpoints/step-6.ckpt", "discriminator.ckpt", "config.txt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&run.join("run_manifest.json"));
    assert_eq!(m.command, "pretrain");
    assert!(m.config_hash.as_deref().is_some_and(|h| h.len() == 64));
    assert!(m.inputs.contains_key("corpus") && m.inputs.contains_key("vocab"));
    assert!(m.outputs.iter().any(|o| o.ends_with("discriminator.ckpt")));

    // resuming from step 3 reproduces the rest of the run
    let resumed = pretrain(dir, "resumed", Some(&run.join("checkpoints/step-3.ckpt")));
    let tail: Vec<&str> = log.lines().skip(3).collect();
    assert_eq!(fs::read_to_string(resumed.join("metrics.jsonl")).unwrap().lines().collect::<Vec<_>>(), tail);
    assert_eq!(
        fs::read(resumed.join("discriminator.ckpt")).unwrap(),
        fs::read(run.join("discriminator.ckpt")).unwrap()
    );
    let init = run.join("discriminator.ckpt");

    // NER
    let ner = dir.join("ner");
    fs::create_dir_all(&ner).unwrap();
    datasets::write_conll_file(ner.join("train.conll"), &synthetic::ner_examples(40, 1)).unwrap();
    datasets::write_conll_file(ner.join("test.conll"), &synthetic::ner_examples(10, 2)).unwrap();
    let out = finetune(dir, &init, "ner", &ner, &[], "ner-run");
    for f in ["seed-1/model.ckpt", "seed-2/model.ckpt", "seed-1/predictions.tsv", "report.txt", "run_manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = json(&out.join("report.json"));
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert!(report["mean"]["f1"].is_number());
    let pred = dir.join("ner-pred.tsv");
    ok(rtd([
        "predict", "--task", "ner", "--model",
        &out.join("seed-1/model.ckpt").display().to_string(),
        "--data", &ner.join("test.conll").display().to_string(),
        "--out", &pred.display().to_string(),
    ]));
    assert_eq!(fs::read(&pred).unwrap(), fs::read(out.join("seed-1/predictions.tsv")).unwrap());
    assert!(dir.join("ner-pred.tsv.run_manifest.json").is_file());
    let eval = dir.join("ner-eval.txt");
    ok(rtd([
        "evaluate", "--task", "ner", "--gold", &ner.join("test.conll").display().to_string(),
        "--pred", &pred.display().to_string(), "--out", &eval.display().to_string(),
    ]));
    let seed1 = json(&out.join("seed-1/report.json"));
    assert_eq!(json(&dir.join("ner-eval.txt.json"))["f1"], seed1["prf"]["f1"]);

    // relation extraction
    let re = dir.join("re");
    fs::create_dir_all(&re).unwrap();
    let labels = LabelSet::new(&["CPR:3", "CPR:4"], "false");
    let examples = |n: usize, offset: usize| -> Vec<ReExample> {
        (0..n)
            .map(|i| ReExample {
                id: format!("r{}", i + offset),
                sentence: format!("w{} w{} w{}", i % 7, 20 + i % 5, 40 + i % 3),
                label: ["CPR:3", "CPR:4", "false"][i % 3].to_string(),
            })
            .collect()
    };
    datasets::write_re_tsv(re.join("train.tsv"), &examples(24, 0)).unwrap();
    datasets::write_re_tsv(re.join("test.tsv"), &examples(9, 100)).unwrap();
    let out = finetune(dir, &init, "re", &re, &["--labels", "CPR:3,CPR:4,false"], "re-run");
    let pred = dir.join("re-pred.tsv");
    ok(rtd([
        "predict", "--task", "re", "--model", &out.join("seed-2/model.ckpt").display().to_string(),
        "--data", &re.join("test.tsv").display().to_string(), "--out", &pred.display().to_string(),
    ]));
    let predicted = datasets::read_label_predictions(&pred).unwrap();
    assert_eq!(predicted.len(), 9);
    assert!(predicted.iter().all(|(_, l)| labels.id(l).is_ok()));
    ok(rtd([
        "evaluate", "--task", "re", "--labels", "CPR:3,CPR:4,false",
        "--gold", &re.join("test.tsv").display().to_string(),
        "--pred", &pred.display().to_string(), "--out", &dir.join("re-eval.txt").display().to_string(),
    ]));
    assert!(json(&dir.join("re-eval.txt.json"))["f1"].is_number());

    // extractive QA over several windows
    let qa = dir.join("qa");
    fs::create_dir_all(&qa).unwrap();
    datasets::write_squad(qa.join("train.json"), &synthetic::qa_questions(12, 40, 20, 1)).unwrap();
    datasets::write_squad(qa.join("test.json"), &synthetic::qa_questions(4, 40, 20, 2)).unwrap();
    let out = finetune(dir, &init, "qa-squad", &qa, &[], "qa-run");
    let pred = dir.join("qa-pred.json");
    ok(rtd([
        "predict", "--task", "qa-squad", "--model", &out.join("seed-1/model.ckpt").display().to_string(),
        "--data", &qa.join("test.json").display().to_string(), "--out", &pred.display().to_string(),
    ]));
    let lists = datasets::read_qa_predictions(&pred).unwrap();
    assert_eq!(lists.len(), 4);
    assert!(lists.iter().all(|(_, answers)| !answers.is_empty() && answers.len() <= 5));
    ok(rtd([
        "evaluate", "--task", "qa-squad", "--gold", &qa.join("test.json").display().to_string(),
        "--pred", &pred.display().to_string(), "--out", &dir.join("qa-eval.txt").display().to_string(),
    ]));
    let qa_report = json(&dir.join("qa-eval.txt.json"));
    assert_eq!(qa_report["questions"], 4);
}

#[test]
fn evaluate_ner_counts_exact_chunks() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = fixture("sample.conll");
    let mut examples = datasets::read_conll(&gold).unwrap().examples;
    // drop one disease, shorten another and invent a chemical
    examples[0].tags[5..8].iter_mut().for_each(|t| *t = "O".into());
    examples[2].tags[4] = "O".into();
    examples[1].tags[3] = "B-Chemical".into();
    let pred = tmp.path().join("pred.conll");
    datasets::write_conll_file(&pred, &examples).unwrap();
    let out = tmp.path().join("eval.txt");
    let run = ok(rtd([
        "evaluate", "--task", "ner", "--gold", &gold.display().to_string(),
        "--pred", &pred.display().to_string(), "--out", &out.display().to_string(),
    ]));
    let report = json(&tmp.path().join("eval.txt.json"));
    // gold: 4 chemicals + 3 diseases; predicted: 5 chemicals + 2 diseases, of which 5 match
    assert_eq!((report["tp"].as_u64(), report["fp"].as_u64(), report["fn"].as_u64()), (Some(5), Some(2), Some(2)));
    assert!(String::from_utf8_lossy(&run.stdout).contains("71.43"));
    let m = manifest(&tmp.path().join("eval.txt.run_manifest.json"));
    assert_eq!(m.command, "evaluate");
    assert!(m.config_hash.is_none());
    assert_eq!(m.inputs.len(), 2);
}

#[test]
fn score_bioasq_writes_table_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scores.txt");
    let run = ok(rtd([
        "score-bioasq", "--mrr-table", &fixture("batch_mrr.tsv").display().to_string(),
        "--out", &out.display().to_string(),
    ]));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(String::from_utf8_lossy(&run.stdout), text);
    let ours = text.lines().find(|l| l.starts_with("ours")).unwrap();
    assert!(ours.contains("4.713"), "{ours}");
    assert!(tmp.path().join("scores.txt.json").is_file());
    assert!(tmp.path().join("scores.txt.run_manifest.json").is_file());
}

#[test]
fn usage_errors_exit_with_code_2() {
    assert_eq!(rtd::<[&str; 0], &str>([]).status.code(), Some(2));
    assert_eq!(rtd(["frobnicate"]).status.code(), Some(2));
    let out = rtd(["predict", "--task", "pos", "--model", "m", "--data", "d", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus.txt");
    fs::write(&corpus, "w1 w2\n").unwrap();
    let out = rtd([
        "pretrain", "--set", "hidden_sise=32", "--corpus", &corpus.display().to_string(),
        "--out", &tmp.path().join("run").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("hidden_sise"), "{err}");

    let config = tmp.path().join("run.cfg");
    fs::write(&config, "task = pretrain\nnum_layers = 2\nnum_layers = 3\n").unwrap();
    let out = rtd([
        "pretrain", "--config", &config.display().to_string(), "--corpus", &corpus.display().to_string(),
        "--out", &tmp.path().join("run").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.cfg:3"));

    let out = rtd([
        "predict", "--task", "ner", "--model", &tmp.path().join("missing.ckpt").display().to_string(),
        "--data", &corpus.display().to_string(), "--out", &tmp.path().join("p.tsv").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
