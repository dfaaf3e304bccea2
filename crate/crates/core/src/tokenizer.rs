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

//! Corpus normalization and WordPiece tokenization.
//!
//! Text is lowercased and stripped of every character outside `\x00-\x7F` before lookup, then
//! split on whitespace and punctuation and encoded with greedy longest-match WordPiece.

use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// Prefix marking a piece that continues the previous one inside a word.
pub const CONTINUATION_PREFIX: &str = "##";

/// Words longer than this many characters are mapped to the unknown token.
pub const MAX_WORD_CHARS: usize = 100;

/// A fixed token inventory. Ids are dense line indices of the vocabulary file.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    pad: usize,
    unk: usize,
    cls: usize,
    sep: usize,
    mask: usize,
}

impl Vocabulary {
    pub fn from_tokens<I, T>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let entries: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(entries.len());
        for (id, token) in entries.iter().enumerate() {
            if token.is_empty() {
                return Err(Error::Vocabulary(format!("empty token at id {id}")));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!("token {token:?} contains whitespace")));
            }
            if index.insert(token.clone(), id).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {token:?}")));
            }
        }
        let special = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocabulary(format!("missing special token {name}")))
        };
        Ok(Vocabulary {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            mask: special(MASK)?,
            entries,
            index,
        })
    }

    /// Reads a vocabulary file: UTF-8, one token per line, id = zero-based line number.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let text = text.strip_suffix('\n').unwrap_or(&text);
        Vocabulary::from_tokens(text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.entries.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn pad_id(&self) -> usize {
        self.pad
    }
    pub fn unk_id(&self) -> usize {
        self.unk
    }
    pub fn cls_id(&self) -> usize {
        self.cls
    }
    pub fn sep_id(&self) -> usize {
        self.sep
    }
    pub fn mask_id(&self) -> usize {
        self.mask
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }

    pub fn is_continuation(&self, id: usize) -> bool {
        self.token(id).is_some_and(|t| t.starts_with(CONTINUATION_PREFIX))
    }
}

/// Lowercases, removes every non-ASCII character, collapses whitespace runs and trims.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase).filter(char::is_ascii) {
        if c.is_ascii_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_ascii() && !c.is_alphanumeric() && !c.is_whitespace())
}

/// A pre-token with its character span `[start, end)` in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and turns every punctuation character into a standalone word.
/// Offsets are character (not byte) indices into `text`.
pub fn pre_tokenize_with_offsets(text: &str) -> Vec<WordSpan> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, end: usize, words: &mut Vec<WordSpan>| {
        if !current.is_empty() {
            words.push(WordSpan {
                text: std::mem::take(current),
                start,
                end,
            });
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, start, i, &mut words);
        } else if is_punctuation(c) {
            flush(&mut current, start, i, &mut words);
            words.push(WordSpan {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    let end = text.chars().count();
    flush(&mut current, start, end, &mut words);
    words
}

pub fn pre_tokenize(text: &str) -> Vec<String> {
    pre_tokenize_with_offsets(text)
        .into_iter()
        .map(|w| w.text)
        .collect()
}

/// Normalizes raw text and splits it into words ready for [`wordpiece`].
pub fn tokenize_text(text: &str) -> Vec<String> {
    pre_tokenize(&normalize(text))
}

/// Greedy longest-prefix-match WordPiece. Returns `[UNK]` when any suffix cannot be matched or
/// the word exceeds [`MAX_WORD_CHARS`].
pub fn wordpiece(word: &str, vocab: &Vocabulary) -> Vec<String> {
    wordpiece_ids(word, vocab)
        .into_iter()
        .map(|id| vocab.entries[id].clone())
        .collect()
}

pub fn wordpiece_ids(word: &str, vocab: &Vocabulary) -> Vec<usize> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return vec![vocab.unk];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![vocab.unk],
        }
    }
    pieces
}

/// Normalizes one word and runs WordPiece on it. A word that normalizes to nothing becomes
/// `[UNK]` so every input word owns at least one piece.
pub fn word_to_ids(word: &str, vocab: &Vocabulary) -> Vec<usize> {
    let normalized = normalize(word);
    if normalized.is_empty() {
        return vec![vocab.unk];
    }
    normalized
        .split(' ')
        .flat_map(|w| wordpiece_ids(w, vocab))
        .collect()
}

/// A model-ready sequence with its alignment back to source words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    /// Source word index within its segment, `None` for special and padding positions.
    pub word_map: Vec<Option<usize>>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-padding positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Builds an encoding from an explicit id layout, padding to `max_len`.
    pub(crate) fn from_layout(
        layout: Vec<(usize, u8, Option<usize>)>,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Encoding {
        let mut enc = Encoding {
            ids: Vec::with_capacity(max_len),
            tokens: Vec::with_capacity(max_len),
            segment_ids: Vec::with_capacity(max_len),
            attention_mask: Vec::with_capacity(max_len),
            word_map: Vec::with_capacity(max_len),
        };
        for (id, segment, word) in layout {
            enc.ids.push(id);
            enc.tokens.push(vocab.entries[id].clone());
            enc.segment_ids.push(segment);
            enc.attention_mask.push(1);
            enc.word_map.push(word);
        }
        while enc.ids.len() < max_len {
            enc.ids.push(vocab.pad);
            enc.tokens.push(PAD.to_string());
            enc.segment_ids.push(0);
            enc.attention_mask.push(0);
            enc.word_map.push(None);
        }
        enc
    }

    /// Reassembles the words of one segment from their pieces, stripping continuation prefixes.
    pub fn segment_words(&self, segment: u8) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        let mut last: Option<usize> = None;
        for i in 0..self.len() {
            let Some(word) = self.word_map[i] else { continue };
            if self.segment_ids[i] != segment {
                continue;
            }
            let piece = self.tokens[i]
                .strip_prefix(CONTINUATION_PREFIX)
                .unwrap_or(&self.tokens[i]);
            if last == Some(word) {
                words.last_mut().unwrap().push_str(piece);
            } else {
                words.push(piece.to_string());
                last = Some(word);
            }
        }
        words
    }
}

/// Lays out `[CLS] A [SEP]` or `[CLS] A [SEP] B [SEP]`, truncating to `max_len` and padding.
///
/// Single sequences are tail-truncated. Pairs drop pieces from the tail of the longer segment
/// first; callers that need windowing (extractive QA) build their own layouts.
pub fn encode<S: AsRef<str>>(
    words_a: &[S],
    words_b: Option<&[S]>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Encoding> {
    if words_a.is_empty() {
        return Err(Error::EmptyInput);
    }
    if max_len < 3 {
        return Err(Error::Config(format!("max_len must be at least 3, got {max_len}")));
    }
    let pieces = |words: &[S]| -> Vec<(usize, usize)> {
        words
            .iter()
            .enumerate()
            .flat_map(|(w, word)| word_to_ids(word.as_ref(), vocab).into_iter().map(move |id| (id, w)))
            .collect()
    };
    let mut a = pieces(words_a);
    let mut b = words_b.map(pieces);
    match &mut b {
        None => a.truncate(max_len - 2),
        Some(b) => {
            while a.len() + b.len() + 3 > max_len {
                if a.len() > b.len() {
                    a.pop();
                } else {
                    b.pop();
                }
            }
        }
    }
    let mut layout = Vec::with_capacity(max_len);
    layout.push((vocab.cls, 0, None));
    layout.extend(a.into_iter().map(|(id, w)| (id, 0, Some(w))));
    layout.push((vocab.sep, 0, None));
    if let Some(b) = b {
        layout.extend(b.into_iter().map(|(id, w)| (id, 1, Some(w))));
        layout.push((vocab.sep, 1, None));
    }
    Ok(Encoding::from_layout(layout, vocab, max_len))
}

#[cfg(test)]
pub(crate) fn test_vocab(extra: &[&str]) -> Vocabulary {
    let mut tokens = vec![PAD, UNK, CLS, SEP, MASK];
    tokens.extend_from_slice(extra);
    Vocabulary::from_tokens(tokens).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn piece_vocab() -> Vocabulary {
        test_vocab(&["pre", "##train", "##ing", "train"])
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Naïve  Test"), "nave test");
        assert_eq!(normalize("abc"), "abc");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  A\t\nB  "), "a b");
    }

    #[test]
    fn wordpiece_examples() {
        let v = piece_vocab();
        assert_eq!(wordpiece("pretraining", &v), ["pre", "##train", "##ing"]);
        assert_eq!(wordpiece("train", &v), ["train"]);
        assert_eq!(wordpiece("xyz", &v), [UNK]);
        // partial match followed by an unmatchable suffix falls back to a single unk
        assert_eq!(wordpiece("prexyz", &v), [UNK]);
    }

    #[test]
    fn long_words_are_unknown() {
        let v = test_vocab(&["a", "##a"]);
        assert_eq!(wordpiece(&"a".repeat(100), &v).len(), 100);
        assert_eq!(wordpiece(&"a".repeat(101), &v), [UNK]);
    }

    #[test]
    fn vocabulary_requires_specials() {
        assert!(Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]"]).is_err());
        assert!(Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[PAD]"]).is_err());
        let v = piece_vocab();
        assert_eq!(v.len(), 9);
        assert!(v.is_continuation(v.id("##ing").unwrap()));
        assert!(!v.is_continuation(v.id("pre").unwrap()));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = piece_vocab();
        v.write_file(&path).unwrap();
        let back = Vocabulary::from_file(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("train"), Some(8));
    }

    #[test]
    fn pre_tokenize_splits_punctuation() {
        assert_eq!(pre_tokenize("il-2 (p<0.05)."), ["il", "-", "2", "(", "p", "<", "0", ".", "05", ")", "."]);
        let spans = pre_tokenize_with_offsets("ab, cd");
        assert_eq!(spans[1], WordSpan { text: ",".into(), start: 2, end: 3 });
        assert_eq!(spans[2], WordSpan { text: "cd".into(), start: 4, end: 6 });
    }

    #[test]
    fn encode_single_layout() {
        let v = piece_vocab();
        let e = encode(&["train"], None, &v, 8).unwrap();
        let t = v.id("train").unwrap();
        assert_eq!(e.ids, vec![v.cls_id(), t, v.sep_id(), 0, 0, 0, 0, 0]);
        assert_eq!(e.attention_mask, vec![1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(e.word_map[1], Some(0));
        assert_eq!(e.word_map[0], None);
    }

    #[test]
    fn encode_pair_layout() {
        let v = test_vocab(&["a", "b"]);
        let e = encode(&["a"], Some(&["b"][..]), &v, 8).unwrap();
        assert_eq!(e.tokens, [CLS, "a", SEP, "b", SEP, PAD, PAD, PAD]);
        assert_eq!(e.segment_ids, vec![0, 0, 0, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn encode_truncates_to_max_len() {
        let v = test_vocab(&["w"]);
        let words = vec!["w"; 600];
        let e = encode(&words, None, &v, 512).unwrap();
        assert_eq!(e.len(), 512);
        assert_eq!(e.word_map.iter().filter(|w| w.is_some()).count(), 510);
        assert_eq!(e.ids[511], v.sep_id());
    }

    #[test]
    fn encode_rejects_empty_input() {
        let v = piece_vocab();
        let empty: [&str; 0] = [];
        assert!(matches!(encode(&empty, None, &v, 8), Err(Error::EmptyInput)));
        assert!(matches!(encode(&["train"], None, &v, 2), Err(Error::Config(_))));
    }

    fn word_strategy() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-e]{1,8}").unwrap()
    }

    fn alphabet_vocab() -> Vocabulary {
        let mut extra: Vec<String> = Vec::new();
        for s in ["a", "b", "c", "ab", "abc", "bc", "ca", "d"] {
            extra.push(s.to_string());
            extra.push(format!("##{s}"));
        }
        let refs: Vec<&str> = extra.iter().map(String::as_str).collect();
        test_vocab(&refs)
    }

    proptest! {
        #[test]
        fn wordpiece_is_greedy_and_complete(word in word_strategy()) {
            let v = alphabet_vocab();
            let pieces = wordpiece(&word, &v);
            if pieces != [UNK] {
                let joined: String = pieces.iter().map(|p| p.trim_start_matches("##")).collect();
                prop_assert_eq!(&joined, &word);
                let chars: Vec<char> = word.chars().collect();
                let mut offset = 0;
                for piece in &pieces {
                    prop_assert!(v.contains(piece));
                    let len = piece.trim_start_matches("##").chars().count();
                    for longer in offset + len + 1..=chars.len() {
                        let mut cand: String = if offset > 0 { "##".into() } else { String::new() };
                        cand.extend(&chars[offset..longer]);
                        prop_assert!(!v.contains(&cand), "longer match {} exists", cand);
                    }
                    offset += len;
                }
            } else {
                prop_assert!(word.contains('e'));
            }
        }

        #[test]
        fn encode_round_trips_words(words in proptest::collection::vec(word_strategy(), 1..20)) {
            let v = alphabet_vocab();
            let enc = encode(&words, None, &v, 256).unwrap();
            let again = encode(&words, None, &v, 256).unwrap();
            prop_assert_eq!(&enc, &again);
            let back = enc.segment_words(0);
            prop_assert_eq!(back.len(), words.len());
            for (orig, got) in words.iter().zip(&back) {
                prop_assert!(got == orig || got == UNK);
            }
            for i in 0..enc.len() {
                if enc.attention_mask[i] == 0 {
                    prop_assert_eq!(enc.ids[i], v.pad_id());
                }
            }
        }
    }
}
