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

//! Synthetic corpora with learnable structure, for desk-scale training checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::{NerExample, QaAnswer, QaContext, QaQuestion};
use crate::rtd::Document;
use crate::tokenizer::{Vocabulary, CLS, MASK, PAD, SEP, UNK};

/// Special tokens followed by `w0, w1, …` up to `size` entries.
pub fn word_vocab(size: usize) -> Vocabulary {
    let specials = [PAD, UNK, CLS, SEP, MASK];
    let words = (0..size.saturating_sub(specials.len())).map(|i| format!("w{i}"));
    Vocabulary::from_tokens(specials.iter().map(|s| s.to_string()).chain(words)).expect("well-formed vocabulary")
}

/// A sparse first-order Markov chain over `w0 … w{n-1}`: every word has two admissible
/// successors, so a replaced token usually breaks the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    successors: Vec<[usize; 2]>,
}

impl MarkovChain {
    pub fn new(num_words: usize, seed: u64) -> Self {
        assert!(num_words >= 2, "need at least two word types");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let successors = (0..num_words)
            .map(|_| [rng.random_range(0..num_words), rng.random_range(0..num_words)])
            .collect();
        MarkovChain { successors }
    }

    pub fn num_words(&self) -> usize {
        self.successors.len()
    }

    /// Documents of 2 to 5 sentences, each a walk of 6 to 14 words.
    pub fn documents(&self, num_documents: usize, seed: u64) -> Vec<Document> {
        let n = self.num_words();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..num_documents)
            .map(|_| {
                let sentences = rng.random_range(2..=5);
                (0..sentences)
                    .map(|_| {
                        let len = rng.random_range(6..=14);
                        let mut w = rng.random_range(0..n);
                        let mut words = Vec::with_capacity(len);
                        for _ in 0..len {
                            words.push(format!("w{w}"));
                            w = self.successors[w][usize::from(rng.random::<f64>() < 0.5)];
                        }
                        words.join(" ")
                    })
                    .collect()
            })
            .collect()
    }
}

/// Topic corpus: `w0 … w{8·topics−1}` form `topics` groups of eight. A document draws one topic
/// and three nine-word sentences whose word at each slot is fixed by its running index, so after
/// packing the identity of every token follows from the topic and its absolute position.
pub fn topic_documents(topics: usize, num_documents: usize, seed: u64) -> Vec<Document> {
    assert!(topics >= 1, "need at least one topic");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_documents)
        .map(|_| {
            let t = rng.random_range(0..topics);
            (0..3)
                .map(|s| {
                    (0..9)
                        .map(|i| format!("w{}", t * TOPIC_SIZE + (s * 9 + i) % TOPIC_SIZE))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect()
        })
        .collect()
}

pub const TOPIC_SIZE: usize = 8;

/// Word ranges of the synthetic NER corpus: single-word `Chemical` mentions, and `Disease`
/// mentions made of a head word followed by one or two modifier words. All other words are `O`.
pub const NER_CHEMICALS: std::ops::Range<usize> = 0..20;
pub const NER_DISEASE_HEADS: std::ops::Range<usize> = 20..30;
pub const NER_DISEASE_MODIFIERS: std::ops::Range<usize> = 30..40;
pub const NER_FILLER: std::ops::Range<usize> = 40..190;

/// Sentences of 8 to 20 words with zero to three entities at random places.
pub fn ner_examples(num_sentences: usize, seed: u64) -> Vec<NerExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, r: &std::ops::Range<usize>| format!("w{}", rng.random_range(r.clone()));
    (0..num_sentences)
        .map(|_| {
            let len = rng.random_range(8..=20);
            let mut words = Vec::with_capacity(len + 3);
            let mut tags = Vec::with_capacity(len + 3);
            let mut entities = rng.random_range(0..=3);
            while words.len() < len {
                if entities > 0 && rng.random_bool(0.3) {
                    entities -= 1;
                    if rng.random_bool(0.5) {
                        words.push(pick(&mut rng, &NER_CHEMICALS));
                        tags.push("B-Chemical".to_string());
                    } else {
                        words.push(pick(&mut rng, &NER_DISEASE_HEADS));
                        tags.push("B-Disease".to_string());
                        for _ in 0..rng.random_range(1..=2) {
                            words.push(pick(&mut rng, &NER_DISEASE_MODIFIERS));
                            tags.push("I-Disease".to_string());
                        }
                    }
                } else {
                    words.push(pick(&mut rng, &NER_FILLER));
                    tags.push("O".to_string());
                }
            }
            NerExample { words, tags }
        })
        .collect()
}

/// Word ranges of the synthetic QA corpus: an answer is a start word followed by an end word,
/// placed once in a context of filler words.
pub const QA_ANSWER_STARTS: std::ops::Range<usize> = 150..160;
pub const QA_ANSWER_ENDS: std::ops::Range<usize> = 160..170;
pub const QA_QUESTION_WORDS: std::ops::Range<usize> = 170..175;
pub const QA_FILLER: std::ops::Range<usize> = 0..150;

/// Questions of two words over contexts of `context_words` words. The answer starts at a word
/// index drawn from `answer_from..context_words − 1`, so callers can push it past the first window.
pub fn qa_questions(num_questions: usize, context_words: usize, answer_from: usize, seed: u64) -> Vec<QaQuestion> {
    assert!(answer_from + 2 <= context_words, "answer must fit in the context");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_questions)
        .map(|i| {
            let at = rng.random_range(answer_from..context_words - 1);
            let mut words: Vec<String> = (0..context_words)
                .map(|_| format!("w{}", rng.random_range(QA_FILLER)))
                .collect();
            words[at] = format!("w{}", rng.random_range(QA_ANSWER_STARTS));
            words[at + 1] = format!("w{}", rng.random_range(QA_ANSWER_ENDS));
            let text = format!("{} {}", words[at], words[at + 1]);
            let start = words[..at].iter().map(|w| w.chars().count() + 1).sum();
            let question = (0..2)
                .map(|_| format!("w{}", rng.random_range(QA_QUESTION_WORDS)))
                .collect::<Vec<_>>()
                .join(" ");
            let id = format!("q{i}");
            QaQuestion {
                id: id.clone(),
                question,
                contexts: vec![QaContext {
                    pair_id: id,
                    context: words.join(" "),
                    answers: vec![QaAnswer { text, start }],
                }],
                batch: None,
            }
        })
        .collect()
}
