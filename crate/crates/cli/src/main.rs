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

//! `rtd`: pretraining, fine-tuning, prediction and evaluation from the command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use rtd_core::checkpoint::{Checkpoint, Component};
use rtd_core::config::{RunConfig, RunKind, RunManifest};
use rtd_core::datasets::{self, LabelSet, NerExample, QaQuestion};
use rtd_core::heads::{self, FinetuneConfig, Task, TaskModel, QA_LABELS};
use rtd_core::metrics::{self, GoldQuestion, MrrEntry, PrfReport, QaReport};
use rtd_core::rtd::{pack_sequences, Pretrainer};
use rtd_core::tokenizer::Vocabulary;

#[derive(Parser, Debug)]
#[command(name = "rtd", version, about = "Replaced-token-detection pretraining and biomedical fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain a generator/discriminator pair on a text corpus.
    Pretrain(PretrainArgs),
    /// Fine-tune a pretrained discriminator on NER, RE or QA, once per seed.
    Finetune(FinetuneArgs),
    /// Run a fine-tuned model over a data file.
    Predict(PredictArgs),
    /// Score predictions against gold data.
    Evaluate(EvaluateArgs),
    /// Per-batch MRR ratios and totals from a table of competitor MRRs.
    ScoreBioasq(ScoreArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, kind: RunKind) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = RunConfig::from_file(path)?;
                if cfg.task != kind {
                    bail!("{} sets task {}, but this command runs {}", path.display(), cfg.task.name(), kind.name());
                }
                cfg
            }
            None => RunConfig::defaults_for(kind),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Corpus file or directory of `.txt` files: one sentence per line, blank lines between documents.
    #[arg(long)]
    corpus: PathBuf,
    /// WordPiece vocabulary, one token per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a resumable checkpoint written by an earlier run on the same corpus.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Pretrained discriminator, or for qa-bioasq a qa-squad model.
    #[arg(long)]
    init: PathBuf,
    /// Directory holding `train` and optionally `test` files (`.tsv` for NER/RE, `.json` for QA).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// RE label set: `chemprot`, `ddi`, or comma-separated classes with the negative class last.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Text report; a `.json` twin is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: Option<String>,
    /// Match QA answers case-sensitively.
    #[arg(long)]
    case_sensitive: bool,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Tab-separated `batch competitor mrr` rows; a header row is allowed.
    #[arg(long)]
    mrr_table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: rtd_core::Error| e.to_string())
}

fn label_set(spec: Option<&str>) -> Result<LabelSet> {
    match spec {
        None => bail!("--labels is required for re (chemprot, ddi, or a comma-separated list ending with the negative class)"),
        Some("chemprot") => Ok(LabelSet::chemprot()),
        Some("ddi") => Ok(LabelSet::ddi()),
        Some(list) => {
            let parts: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            let Some((negative, positive)) = parts.split_last() else { bail!("empty --labels") };
            if positive.is_empty() {
                bail!("--labels needs at least one positive class before the negative class");
            }
            Ok(LabelSet::new(positive, negative))
        }
    }
}

fn args_vec() -> Vec<String> {
    std::env::args().collect()
}

/// Path of the manifest written beside a single output file.
fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run_manifest.json");
    out.with_file_name(name)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn json_twin(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

fn pretrain(args: PretrainArgs) -> Result<()> {
    let cfg = args.config.load(RunKind::Pretrain)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = RunManifest::new("pretrain", Some(&cfg), args_vec());
    manifest.input("corpus", &args.corpus)?;

    let resume = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    let vocab = match (&args.vocab, &resume) {
        (Some(path), _) => {
            manifest.input("vocab", path)?;
            Vocabulary::from_file(path)?
        }
        (None, Some(ck)) => ck.vocab()?,
        (None, None) => bail!("--vocab is required unless resuming"),
    };
    let documents = datasets::stream_pretrain_corpus(&args.corpus, Some(cfg.seed))?;
    let (data, stats) = pack_sequences(&documents, &vocab, cfg.max_seq_length)?;
    info!("packed {} documents into {} sequences", stats.documents, stats.sequences);

    let mut trainer = match &resume {
        Some(ck) => {
            manifest.input("resume", args.resume.as_deref().expect("resume path"))?;
            let t = Pretrainer::resume(ck, vocab, data)?;
            if t.config != cfg.pretrain_config(t.config.encoder.vocab_size)? {
                bail!("config differs from the one recorded in the resume checkpoint");
            }
            t
        }
        None => Pretrainer::new(cfg.pretrain_config(vocab.len())?, vocab, data)?,
    };

    let log_path = args.out.join("metrics.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let ckpt_dir = args.out.join("checkpoints");
    let every = if cfg.save_every == 0 { cfg.train_steps } else { cfg.save_every };
    while trainer.step() < cfg.train_steps {
        let until = ((trainer.step() / every + 1) * every).min(cfg.train_steps);
        trainer.run(until, Some(&mut log as &mut dyn Write))?;
        fs::create_dir_all(&ckpt_dir)?;
        let path = ckpt_dir.join(format!("step-{until}.ckpt"));
        trainer.resume_checkpoint().save(&path)?;
        manifest.output(&path);
        info!("step {until}: wrote {}", path.display());
    }
    let disc = args.out.join("discriminator.ckpt");
    trainer.discriminator_checkpoint().save(&disc)?;
    fs::write(args.out.join("config.txt"), cfg.to_text())?;
    manifest.output(&log_path);
    manifest.output(&disc);
    manifest.write(&args.out)?;
    Ok(())
}

struct TaskData {
    ner: Vec<NerExample>,
    re: Vec<datasets::ReExample>,
    qa: Vec<QaQuestion>,
}

fn find_split(dir: &Path, split: &str, task: Task) -> Option<PathBuf> {
    let exts: &[&str] = if task.is_qa() { &["json"] } else { &["tsv", "txt", "conll"] };
    exts.iter().map(|e| dir.join(format!("{split}.{e}"))).find(|p| p.is_file())
}

fn read_task_file(task: Task, path: &Path, labels: Option<&LabelSet>) -> Result<TaskData> {
    let mut d = TaskData {
        ner: Vec::new(),
        re: Vec::new(),
        qa: Vec::new(),
    };
    match task {
        Task::Ner => {
            let c = datasets::read_conll(path)?;
            if c.bio_violations > 0 {
                log::warn!("{}: {} I- tags follow a different type; scored with the repair rule", path.display(), c.bio_violations);
            }
            d.ner = c.examples;
        }
        Task::Re => d.re = datasets::read_re_tsv(path, labels.expect("label set for re"))?,
        Task::QaSquad => d.qa = datasets::read_squad(path)?,
        Task::QaBioasq => d.qa = datasets::read_bioasq(path, None)?,
    }
    Ok(d)
}

fn labels_for(task: Task, train: &TaskData, re_labels: Option<&LabelSet>) -> Vec<String> {
    match task {
        Task::Ner => datasets::TagSet::from_examples(&train.ner).tags,
        Task::Re => re_labels.expect("label set for re").all(),
        Task::QaSquad | Task::QaBioasq => QA_LABELS.iter().map(|s| s.to_string()).collect(),
    }
}

/// Task checkpoints carry the vocabulary and fine-tuning settings needed for prediction.
fn task_checkpoint(model: &TaskModel, vocab: &Vocabulary, cfg: &FinetuneConfig, re_labels: Option<&LabelSet>, step: u64) -> Checkpoint {
    let mut ck = model.checkpoint(step, cfg.seed);
    ck.set_vocab(vocab);
    ck.manifest
        .metadata
        .insert("finetune".into(), serde_json::to_value(cfg).expect("config serializes"));
    if let Some(l) = re_labels {
        ck.manifest.metadata.insert("negative_label".into(), serde_json::json!(l.negative));
    }
    ck
}

fn finetune_config_of(ck: &Checkpoint) -> Result<FinetuneConfig> {
    let v = ck
        .manifest
        .metadata
        .get("finetune")
        .cloned()
        .context("model checkpoint records no fine-tuning settings")?;
    Ok(serde_json::from_value(v)?)
}

fn re_labels_of(model: &TaskModel, ck: &Checkpoint) -> Result<LabelSet> {
    let negative = ck
        .manifest
        .metadata
        .get("negative_label")
        .and_then(|v| v.as_str())
        .context("model checkpoint records no negative class")?;
    let positive: Vec<&str> = model.labels.iter().map(String::as_str).filter(|l| *l != negative).collect();
    Ok(LabelSet::new(&positive, negative))
}

#[derive(serde::Serialize)]
struct SeedReport {
    seed: u64,
    epoch_losses: Vec<f64>,
    prf: Option<PrfReport>,
    qa: Option<QaReport>,
}

enum Evaluation {
    Prf(PrfReport),
    Qa(QaReport),
}

fn evaluate_model(model: &TaskModel, task: Task, test: &TaskData, vocab: &Vocabulary, cfg: &FinetuneConfig, re_labels: Option<&LabelSet>) -> Result<(Evaluation, Predictions)> {
    let preds = run_predictions(model, task, test, vocab, cfg, cfg.batch_size)?;
    let eval = match (&preds, task) {
        (Predictions::Ner(tags), _) => {
            let gold: Vec<Vec<String>> = test.ner.iter().map(|e| e.tags.clone()).collect();
            Evaluation::Prf(metrics::entity_prf_from_tags(&gold, tags)?)
        }
        (Predictions::Labels(pairs), _) => {
            let labels = re_labels.expect("label set for re");
            let gold: Vec<&str> = test.re.iter().map(|e| e.label.as_str()).collect();
            let pred: Vec<&str> = pairs.iter().map(|(_, l)| l.as_str()).collect();
            Evaluation::Prf(metrics::relation_prf(&gold, &pred, &labels.positive_refs(), &labels.negative)?)
        }
        (Predictions::Qa(lists), _) => Evaluation::Qa(metrics::qa_metrics(&gold_questions(&test.qa), lists, false)?),
    };
    Ok((eval, preds))
}

fn gold_questions(qa: &[QaQuestion]) -> Vec<GoldQuestion> {
    qa.iter()
        .map(|q| GoldQuestion {
            id: q.id.clone(),
            synonyms: q.synonyms(),
        })
        .collect()
}

enum Predictions {
    Ner(Vec<Vec<String>>),
    Labels(Vec<(String, String)>),
    Qa(Vec<(String, Vec<String>)>),
}

fn run_predictions(
    model: &TaskModel,
    task: Task,
    data: &TaskData,
    vocab: &Vocabulary,
    cfg: &FinetuneConfig,
    batch_size: usize,
) -> Result<Predictions> {
    Ok(match task {
        Task::Ner => {
            let sentences: Vec<Vec<String>> = data.ner.iter().map(|e| e.words.clone()).collect();
            Predictions::Ner(heads::predict_ner(model, &sentences, vocab, cfg.max_seq_length, batch_size)?)
        }
        Task::Re => {
            let labels = heads::predict_re(model, &data.re, vocab, cfg.max_seq_length, batch_size)?;
            Predictions::Labels(data.re.iter().map(|e| e.id.clone()).zip(labels).collect())
        }
        Task::QaSquad | Task::QaBioasq => {
            let mut c = *cfg;
            c.batch_size = batch_size;
            let lists = heads::predict_qa(model, &data.qa, vocab, &c)?;
            Predictions::Qa(lists.into_iter().map(|l| (l.question_id.clone(), l.texts())).collect())
        }
    })
}

fn write_predictions(path: &Path, preds: &Predictions, data: &TaskData) -> Result<()> {
    create_parent(path)?;
    match preds {
        Predictions::Ner(tags) => {
            let examples: Vec<NerExample> = data
                .ner
                .iter()
                .zip(tags)
                .map(|(e, t)| NerExample {
                    words: e.words.clone(),
                    tags: t.clone(),
                })
                .collect();
            datasets::write_conll_file(path, &examples)?;
        }
        Predictions::Labels(pairs) => datasets::write_label_predictions(path, pairs)?,
        Predictions::Qa(lists) => datasets::write_qa_predictions(path, lists)?,
    }
    Ok(())
}

fn finetune(args: FinetuneArgs) -> Result<()> {
    let task = args.task;
    let mut cfg = args.config.load(RunKind::Finetune(task))?;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let re_labels = if task == Task::Re { Some(label_set(args.labels.as_deref())?) } else { None };
    let init = Checkpoint::load(&args.init)?;
    match (task, init.manifest.component) {
        (Task::QaBioasq, Component::TaskHead) | (_, Component::Discriminator) => {}
        (_, c) => bail!("--init must be a pretrained discriminator for {task}, got a {c:?} checkpoint"),
    }
    let vocab = init.vocab()?;
    let train_path = find_split(&args.data, "train", task)
        .with_context(|| format!("{} has no train file for {task}", args.data.display()))?;
    let test_path = find_split(&args.data, "test", task);
    let train = read_task_file(task, &train_path, re_labels.as_ref())?;
    let test = test_path
        .as_deref()
        .map(|p| read_task_file(task, p, re_labels.as_ref()))
        .transpose()?;
    let labels = labels_for(task, &train, re_labels.as_ref());

    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("finetune", Some(&cfg), args_vec());
    manifest.input("init", &args.init)?;
    manifest.input("train", &train_path)?;
    if let Some(p) = &test_path {
        manifest.input("test", p)?;
    }

    let base_seed = cfg.seed;
    let mut reports = Vec::new();
    for i in 0..args.seeds {
        cfg.seed = base_seed + i;
        let fcfg = cfg.finetune_config();
        info!("{task}: seed {}", fcfg.seed);
        let mut model = TaskModel::from_checkpoint(&init, &fcfg, labels.clone())?;
        let losses = match task {
            Task::Ner => heads::finetune_ner(&mut model, &train.ner, &vocab, &fcfg)?,
            Task::Re => heads::finetune_re(&mut model, &train.re, re_labels.as_ref().expect("labels"), &vocab, &fcfg)?,
            Task::QaSquad | Task::QaBioasq => heads::finetune_qa(&mut model, &train.qa, &vocab, &fcfg)?,
        };
        let dir = args.out.join(format!("seed-{}", fcfg.seed));
        fs::create_dir_all(&dir)?;
        let model_path = dir.join("model.ckpt");
        task_checkpoint(&model, &vocab, &fcfg, re_labels.as_ref(), losses.len() as u64).save(&model_path)?;
        manifest.output(&model_path);
        let mut report = SeedReport {
            seed: fcfg.seed,
            epoch_losses: losses,
            prf: None,
            qa: None,
        };
        if let Some(test) = &test {
            let (eval, preds) = evaluate_model(&model, task, test, &vocab, &fcfg, re_labels.as_ref())?;
            let pred_path = dir.join(if task.is_qa() { "predictions.json" } else { "predictions.tsv" });
            write_predictions(&pred_path, &preds, test)?;
            manifest.output(&pred_path);
            match eval {
                Evaluation::Prf(r) => report.prf = Some(r),
                Evaluation::Qa(r) => report.qa = Some(r),
            }
        }
        write_json(&dir.join("report.json"), &report)?;
        reports.push(report);
    }

    if test.is_some() {
        let names: Vec<String> = reports.iter().map(|r| format!("seed {}", r.seed)).collect();
        let (text, json) = if task.is_qa() {
            let qa: Vec<QaReport> = reports.iter().filter_map(|r| r.qa).collect();
            let agg = metrics::aggregate_qa(&qa)?;
            let mut rows: Vec<(String, QaReport)> = names.into_iter().zip(qa).collect();
            rows.push(("mean".into(), agg));
            (metrics::render_qa_table(&rows), serde_json::json!({ "seeds": reports, "mean": agg }))
        } else {
            let prf: Vec<PrfReport> = reports.iter().filter_map(|r| r.prf).collect();
            let agg = metrics::aggregate_prf(&prf)?;
            let rows: Vec<(String, PrfReport)> = names.into_iter().zip(prf).collect();
            let mut text = metrics::render_prf_table(&rows);
            text.push_str(&format!(
                "mean over {} seeds: P {:.2}  R {:.2}  F {:.2}  (F of mean P/R {:.2})\n",
                agg.count, agg.precision, agg.recall, agg.f1, agg.f1_of_means
            ));
            (text, serde_json::json!({ "seeds": reports, "mean": agg }))
        };
        fs::write(args.out.join("report.txt"), &text)?;
        write_json(&args.out.join("report.json"), &json)?;
        print!("{text}");
    } else {
        write_json(&args.out.join("report.json"), &serde_json::json!({ "seeds": reports }))?;
    }
    fs::write(args.out.join("config.txt"), cfg.to_text())?;
    manifest.write(&args.out)?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.model)?;
    let model = TaskModel::load(&ck)?;
    if model.task != args.task {
        bail!("model was fine-tuned for {}, not {}", model.task, args.task);
    }
    let vocab = ck.vocab()?;
    let cfg = finetune_config_of(&ck)?;
    let re_labels = if args.task == Task::Re { Some(re_labels_of(&model, &ck)?) } else { None };
    let data = read_task_file(args.task, &args.data, re_labels.as_ref())?;
    let preds = run_predictions(&model, args.task, &data, &vocab, &cfg, args.batch_size.max(1))?;
    write_predictions(&args.out, &preds, &data)?;
    let mut manifest = RunManifest::new("predict", None, args_vec());
    manifest.seed = Some(cfg.seed);
    manifest.input("model", &args.model)?;
    manifest.input("data", &args.data)?;
    manifest.output(&args.out);
    manifest.write_to(&manifest_beside(&args.out))?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (text, json) = match args.task {
        Task::Ner => {
            let gold = datasets::read_conll(&args.gold)?.examples;
            let pred = datasets::read_conll(&args.pred)?.examples;
            if gold.len() != pred.len() {
                bail!("gold has {} sentences, predictions {}", gold.len(), pred.len());
            }
            for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
                if g.words != p.words {
                    bail!("sentence {} differs between gold and predictions", i + 1);
                }
            }
            let g: Vec<Vec<String>> = gold.into_iter().map(|e| e.tags).collect();
            let p: Vec<Vec<String>> = pred.into_iter().map(|e| e.tags).collect();
            let report = metrics::entity_prf_from_tags(&g, &p)?;
            (metrics::render_prf_table(&[("ner".into(), report)]), serde_json::to_value(report)?)
        }
        Task::Re => {
            let labels = label_set(args.labels.as_deref())?;
            let gold = datasets::read_re_tsv(&args.gold, &labels)?;
            let pred = datasets::read_label_predictions(&args.pred)?;
            let by_id: std::collections::HashMap<&str, &str> = pred.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
            if by_id.len() != pred.len() {
                bail!("duplicate example ids in {}", args.pred.display());
            }
            let mut g = Vec::with_capacity(gold.len());
            let mut p = Vec::with_capacity(gold.len());
            for e in &gold {
                let label = by_id
                    .get(e.id.as_str())
                    .with_context(|| format!("no prediction for example {}", e.id))?;
                g.push(e.label.as_str());
                p.push(*label);
            }
            if pred.len() != gold.len() {
                bail!("{} predictions for {} gold examples", pred.len(), gold.len());
            }
            let report = metrics::relation_prf(&g, &p, &labels.positive_refs(), &labels.negative)?;
            (metrics::render_prf_table(&[("re".into(), report)]), serde_json::to_value(report)?)
        }
        Task::QaSquad | Task::QaBioasq => {
            let gold = if args.task == Task::QaSquad {
                datasets::read_squad(&args.gold)?
            } else {
                datasets::read_bioasq(&args.gold, None)?
            };
            let pred = datasets::read_qa_predictions(&args.pred)?;
            let report = metrics::qa_metrics(&gold_questions(&gold), &pred, args.case_sensitive)?;
            (metrics::render_qa_table(&[(args.task.to_string(), report)]), serde_json::to_value(report)?)
        }
    };
    create_parent(&args.out)?;
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    write_json(&json_twin(&args.out), &json)?;
    print!("{text}");
    let mut manifest = RunManifest::new("evaluate", None, args_vec());
    manifest.input("gold", &args.gold)?;
    manifest.input("pred", &args.pred)?;
    manifest.output(&args.out);
    manifest.output(&json_twin(&args.out));
    manifest.write_to(&manifest_beside(&args.out))?;
    Ok(())
}

fn read_mrr_table(path: &Path) -> Result<Vec<MrrEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            bail!("{}:{}: expected batch, competitor and MRR separated by tabs", path.display(), i + 1);
        }
        let mrr = match fields[2].parse::<f64>() {
            Ok(m) => m,
            Err(_) if entries.is_empty() && i == 0 => continue,
            Err(_) => bail!("{}:{}: cannot parse MRR {:?}", path.display(), i + 1, fields[2]),
        };
        entries.push(MrrEntry {
            batch: fields[0].to_string(),
            competitor: fields[1].to_string(),
            mrr,
        });
    }
    Ok(entries)
}

fn score_bioasq(args: ScoreArgs) -> Result<()> {
    let entries = read_mrr_table(&args.mrr_table)?;
    let table = metrics::score_table(&entries)?;
    let text = metrics::render_score_table(&table);
    create_parent(&args.out)?;
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    write_json(&json_twin(&args.out), &table)?;
    print!("{text}");
    let mut manifest = RunManifest::new("score-bioasq", None, args_vec());
    manifest.input("mrr_table", &args.mrr_table)?;
    manifest.output(&args.out);
    manifest.output(&json_twin(&args.out));
    manifest.write_to(&manifest_beside(&args.out))?;
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ScoreBioasq(a) => score_bioasq(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
