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
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chunk(start: usize, end: usize, kind: &str) -> Chunk {
    Chunk {
        start,
        end,
        kind: kind.to_string(),
    }
}

fn tags(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn chunk_examples() {
    assert_eq!(extract_chunks(&tags("B-X I-X O B-Y")), vec![chunk(0, 1, "X"), chunk(3, 3, "Y")]);
    assert_eq!(extract_chunks(&tags("O I-X I-X")), vec![chunk(1, 2, "X")]);
    assert!(extract_chunks(&tags("O O")).is_empty());
    assert_eq!(extract_chunks(&tags("B-X I-Y B-Y B-Y")), vec![
        chunk(0, 0, "X"),
        chunk(1, 1, "Y"),
        chunk(2, 2, "Y"),
        chunk(3, 3, "Y")
    ]);
}

#[test]
fn entity_prf_example() {
    let r = entity_prf(&[vec![chunk(0, 1, "X")]], &[vec![chunk(0, 1, "X"), chunk(3, 3, "Y")]]).unwrap();
    assert_eq!(round_to(r.precision, 2), 50.00);
    assert_eq!(round_to(r.recall, 2), 100.00);
    assert_eq!(round_to(r.f1, 2), 66.67);
    let same = entity_prf(&[vec![chunk(0, 1, "X")]], &[vec![chunk(0, 1, "X")]]).unwrap();
    assert_eq!((same.precision, same.recall, same.f1), (100.0, 100.0, 100.0));
    assert!(matches!(entity_prf(&[vec![]], &[]), Err(Error::CountMismatch { .. })));
}

#[test]
fn f1_examples() {
    // published F values come from rounded P and R, hence the one-hundredth tolerance
    assert!((round_to(f1(88.76, 91.34), 2) - 90.03).abs() <= 0.01 + 1e-9);
    assert!((round_to(f1(85.87, 89.29), 2) - 87.54).abs() <= 0.01 + 1e-9);
    assert_eq!(f1(42.5, 42.5), 42.5);
    assert_eq!(f1(0.0, 0.0), 0.0);
}

#[test]
fn relation_examples() {
    let r = relation_prf(&["A", "A", "neg", "B"], &["A", "neg", "neg", "B"], &["A", "B"], "neg").unwrap();
    assert_eq!((r.tp, r.fp, r.fn_), (2, 0, 1));
    assert_eq!(round_to(r.precision, 2), 100.0);
    assert_eq!(round_to(r.recall, 2), 66.67);
    assert_eq!(round_to(r.f1, 2), 80.0);
    let none = relation_prf(&["A", "B"], &["neg", "neg"], &["A", "B"], "neg").unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    let err = relation_prf(&["A"], &["C"], &["A", "B"], "neg").unwrap_err();
    assert!(matches!(err, Error::UnknownLabel { ref label, ref admissible } if label == "C" && admissible.len() == 3));
}

fn gold(id: &str, syn: &[&str]) -> GoldQuestion {
    GoldQuestion {
        id: id.to_string(),
        synonyms: syn.iter().map(|s| s.to_string()).collect(),
    }
}

fn pred(id: &str, answers: &[&str]) -> (String, Vec<String>) {
    (id.to_string(), answers.iter().map(|s| s.to_string()).collect())
}

#[test]
fn qa_examples() {
    let g = [gold("q1", &["aspirin"]), gold("q2", &["BRCA1", "brca-1"]), gold("q3", &["x"])];
    let p = [
        pred("q1", &["Aspirin", "b"]),
        pred("q2", &["tp53", "brca-1 "]),
        pred("q3", &["y"]),
    ];
    let r = qa_metrics(&g, &p, false).unwrap();
    assert_eq!(round_to(r.sacc, 2), 33.33);
    assert_eq!(round_to(r.lacc, 2), 66.67);
    assert_eq!(round_to(r.mrr, 2), 50.0);
    let strict = qa_metrics(&g, &p, true).unwrap();
    assert_eq!(round_to(strict.sacc, 2), 0.0);

    let all = qa_metrics(&g[..1], &p[..1], false).unwrap();
    assert_eq!((all.sacc, all.lacc, all.mrr), (100.0, 100.0, 100.0));

    let dup = [pred("q1", &[]), pred("q1", &[])];
    assert!(matches!(qa_metrics(&g, &dup, false), Err(Error::DuplicateId(_))));
}

#[test]
fn answers_beyond_list_capacity_do_not_count() {
    let g = [gold("q", &["f"])];
    let r = qa_metrics(&g, &[pred("q", &["a", "b", "c", "d", "e", "f"])], false).unwrap();
    assert_eq!(r.lacc, 0.0);
}

fn entry(batch: &str, competitor: &str, mrr: f64) -> MrrEntry {
    MrrEntry {
        batch: batch.to_string(),
        competitor: competitor.to_string(),
        mrr,
    }
}

/// Per-batch maxima of the five test batches and one system's MRRs.
const MAXIMA: [f64; 5] = [47.95, 56.67, 51.15, 69.55, 36.38];
const SYSTEM: [f64; 5] = [47.95, 53.16, 46.62, 69.55, 31.42];

#[test]
fn score_table_reproduces_published_ratios() {
    let mut entries = Vec::new();
    for b in 0..5 {
        let batch = format!("{}", b + 1);
        entries.push(entry(&batch, "system", SYSTEM[b]));
        entries.push(entry(&batch, "best", MAXIMA[b]));
    }
    entries.push(entry("1", "KU-DMIS-1", 46.37));
    let table = score_table(&entries).unwrap();
    let row = &table.ratios[0];
    let expected = [1.000, 0.938, 0.911, 1.000, 0.864];
    for (got, want) in row.iter().zip(expected) {
        assert!((round_to(got.unwrap(), 3) - want).abs() < 1e-9, "{got:?} vs {want}");
    }
    assert_eq!(round_to(table.totals[0], 3), 4.713);
    assert_eq!(round_to(table.ratios[2][0].unwrap(), 3), 0.967);
    assert_eq!(table.ratios[2][1], None);
    let rendered = render_score_table(&table);
    assert!(rendered.contains("4.713"), "{rendered}");
}

#[test]
fn score_table_edge_cases() {
    let single = score_table(&[entry("1", "a", 3.0), entry("2", "a", 7.0)]).unwrap();
    assert_eq!(single.ratios[0], vec![Some(1.0), Some(1.0)]);
    let zero = score_table(&[entry("1", "a", 0.0), entry("1", "b", 0.0)]).unwrap();
    assert_eq!(zero.totals, vec![0.0, 0.0]);
    assert!(matches!(
        score_table(&[entry("1", "a", 1.0), entry("1", "a", 2.0)]),
        Err(Error::DuplicateId(_))
    ));
}

#[test]
fn seed_aggregation() {
    let reports: Vec<PrfReport> = [90.0, 90.1, 89.9, 90.05, 89.95]
        .iter()
        .map(|&f| PrfReport {
            precision: f,
            recall: f,
            f1: f,
            tp: 0,
            fp: 0,
            fn_: 0,
        })
        .collect();
    assert_eq!(round_to(aggregate_prf(&reports).unwrap().f1, 2), 90.0);
    let one = aggregate_prf(&reports[..1]).unwrap();
    assert_eq!((one.precision, one.f1, one.count), (90.0, 90.0, 1));

    // P/R of 100/50 and 50/100: each F is 66.67 but the F of the mean P and R is 75
    let a = PrfReport::from_counts(1, 0, 1);
    let b = PrfReport::from_counts(1, 1, 0);
    let agg = aggregate_prf(&[a, b]).unwrap();
    assert_eq!(round_to(agg.f1, 2), 66.67);
    assert_eq!(round_to(agg.f1_of_means, 2), 75.0);
    assert!(aggregate_prf(&[]).is_err());
}

// Independent reference scorers used as oracles below.

fn oracle_chunks(tags: &[String]) -> Vec<Chunk> {
    // conlleval-style start/end detection over (prefix, type) pairs
    let split = |t: &str| -> (char, String) {
        match t.split_once('-') {
            Some((p, k)) if p == "B" || p == "I" => (p.chars().next().unwrap(), k.to_string()),
            _ => ('O', String::new()),
        }
    };
    let ends = |prev: &(char, String), cur: &(char, String)| {
        prev.0 != 'O' && (cur.0 == 'O' || cur.0 == 'B' || cur.1 != prev.1)
    };
    let starts = |prev: &(char, String), cur: &(char, String)| {
        cur.0 == 'B' || (cur.0 == 'I' && (prev.0 == 'O' || prev.1 != cur.1))
    };
    let mut out = Vec::new();
    let mut prev = ('O', String::new());
    let mut start = 0;
    for (i, t) in tags.iter().enumerate() {
        let cur = split(t);
        if ends(&prev, &cur) {
            out.push(chunk(start, i - 1, &prev.1));
        }
        if starts(&prev, &cur) {
            start = i;
        }
        prev = cur;
    }
    if prev.0 != 'O' {
        out.push(chunk(start, tags.len() - 1, &prev.1));
    }
    out
}

fn random_tags(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(0..15);
    (0..len)
        .map(|_| match rng.random_range(0..5) {
            0 | 1 => "O".to_string(),
            2 => format!("B-{}", ["X", "Y"][rng.random_range(0..2)]),
            _ => format!("I-{}", ["X", "Y"][rng.random_range(0..2)]),
        })
        .collect()
}

#[test]
fn chunk_extraction_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let t = random_tags(&mut rng);
        assert_eq!(extract_chunks(&t), oracle_chunks(&t), "{t:?}");
    }
}

#[test]
fn entity_scoring_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let sentences = rng.random_range(1..6);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..sentences {
            let g = random_tags(&mut rng);
            let p: Vec<String> = g
                .iter()
                .map(|t| if rng.random_bool(0.3) { random_tags_one(&mut rng) } else { t.clone() })
                .collect();
            gold.push(g);
            pred.push(p);
        }
        let report = entity_prf_from_tags(&gold, &pred).unwrap();
        let (mut tp, mut n_gold, mut n_pred) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(&pred) {
            let gc = oracle_chunks(g);
            let pc = oracle_chunks(p);
            n_gold += gc.len();
            n_pred += pc.len();
            for c in &pc {
                if gc.iter().any(|x| x == c) {
                    tp += 1;
                }
            }
        }
        assert_eq!((report.tp, report.fp, report.fn_), (tp, n_pred - tp, n_gold - tp));
        let p = if n_pred == 0 { 0.0 } else { 100.0 * tp as f64 / n_pred as f64 };
        let r = if n_gold == 0 { 0.0 } else { 100.0 * tp as f64 / n_gold as f64 };
        assert_eq!(report.precision, p);
        assert_eq!(report.recall, r);
    }
}

fn random_tags_one(rng: &mut ChaCha8Rng) -> String {
    ["O", "B-X", "I-X", "B-Y", "I-Y"][rng.random_range(0..5)].to_string()
}

#[test]
fn relation_scoring_matches_oracle() {
    let labels = ["A", "B", "C", "neg"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = rng.random_range(0..30);
        let gold: Vec<&str> = (0..n).map(|_| labels[rng.random_range(0..4)]).collect();
        let pred: Vec<&str> = (0..n).map(|_| labels[rng.random_range(0..4)]).collect();
        let report = relation_prf(&gold, &pred, &["A", "B", "C"], "neg").unwrap();
        // per-class counts summed over the positive classes
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for class in ["A", "B", "C"] {
            for i in 0..n {
                let (g, p) = (gold[i] == class, pred[i] == class);
                tp += usize::from(g && p);
                fp += usize::from(!g && p);
                fn_ += usize::from(g && !p);
            }
        }
        assert_eq!((report.tp, report.fp, report.fn_), (tp, fp, fn_));
    }
}

#[test]
fn qa_scoring_matches_oracle() {
    let words = ["alpha", "Beta", "gamma", "delta", "eps ilon", "zeta", "eta"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let mut g = Vec::new();
        let mut p = Vec::new();
        for q in 0..n {
            let id = format!("q{q}");
            let syn: Vec<String> = (0..rng.random_range(1..3)).map(|_| words[rng.random_range(0..7)].to_string()).collect();
            let cand: Vec<String> = (0..rng.random_range(0..8))
                .map(|_| {
                    let w = words[rng.random_range(0..7)];
                    if rng.random_bool(0.5) { w.to_uppercase() } else { format!(" {w}") }
                })
                .collect();
            g.push(GoldQuestion { id: id.clone(), synonyms: syn });
            if rng.random_bool(0.9) {
                p.push((id, cand));
            }
        }
        let report = qa_metrics(&g, &p, false).unwrap();
        let (mut s, mut l, mut m) = (0.0, 0.0, 0.0);
        for q in &g {
            let cands = p.iter().find(|(id, _)| *id == q.id).map(|(_, c)| c.clone()).unwrap_or_default();
            let norm = |x: &str| x.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            for (i, c) in cands.iter().enumerate().take(5) {
                if q.synonyms.iter().any(|syn| norm(syn) == norm(c)) {
                    if i == 0 {
                        s += 1.0;
                    }
                    l += 1.0;
                    m += 1.0 / (i + 1) as f64;
                    break;
                }
            }
        }
        let k = n as f64;
        assert!((report.sacc - 100.0 * s / k).abs() < 1e-9);
        assert!((report.lacc - 100.0 * l / k).abs() < 1e-9);
        assert!((report.mrr - 100.0 * m / k).abs() < 1e-9);
        assert!(report.sacc <= report.mrr + 1e-9 && report.mrr <= report.lacc + 1e-9);
    }
}

proptest! {
    #[test]
    fn chunks_round_trip_through_tags(spans in proptest::collection::vec((1usize..4, 0usize..3, any::<bool>()), 0..8)) {
        let mut chunks = Vec::new();
        let mut pos = 0;
        for (len, gap, kind) in spans {
            pos += gap;
            chunks.push(chunk(pos, pos + len - 1, if kind { "X" } else { "Y" }));
            pos += len;
        }
        let len = pos + 1;
        prop_assert_eq!(extract_chunks(&chunks_to_tags(&chunks, len)), chunks);
    }

    #[test]
    fn score_table_has_a_winner_per_batch(mrrs in proptest::collection::vec(proptest::collection::vec(0.1f64..100.0, 3), 1..5)) {
        let mut entries = Vec::new();
        for (b, row) in mrrs.iter().enumerate() {
            for (c, &m) in row.iter().enumerate() {
                entries.push(entry(&format!("{b}"), &format!("c{c}"), m));
            }
        }
        let table = score_table(&entries).unwrap();
        for b in 0..mrrs.len() {
            prop_assert!(table.ratios.iter().any(|r| r[b] == Some(1.0)));
        }
        let mut reversed = entries.clone();
        reversed.sort_by(|x, y| y.batch.cmp(&x.batch).then(x.competitor.cmp(&y.competitor)));
        let other = score_table(&reversed).unwrap();
        for (c, name) in table.competitors.iter().enumerate() {
            let j = other.competitors.iter().position(|n| n == name).unwrap();
            prop_assert!((table.totals[c] - other.totals[j]).abs() < 1e-9);
        }
    }
}
