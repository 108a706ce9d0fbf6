//! Subword vocabulary and greedy longest-match-first tokenization with "##"
//! continuation pieces, plus fixed-length sequence framing.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{PipelineError, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Token table; line number = id in the on-disk format. `[PAD]` must be id 0.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(PipelineError::InvalidConfig(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        if tokens.first().map(String::as_str) != Some(PAD) {
            return Err(PipelineError::InvalidConfig(format!(
                "{PAD} must be the first vocabulary entry (id 0)"
            )));
        }
        for special in [UNK, CLS, SEP] {
            if !ids.contains_key(special) {
                return Err(PipelineError::InvalidConfig(format!(
                    "vocabulary lacks special token {special}"
                )));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    /// Reads a UTF-8 vocabulary file, one token per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
        Vocabulary::new(src.lines().map(str::to_string).collect())
    }

    /// Deterministic whole-word vocabulary from normalized texts: specials,
    /// then `atomic` entries (placeholders), then words by descending
    /// frequency (ties by token order), truncated to `max_size` when given.
    pub fn build_from_texts<'a>(
        texts: impl Iterator<Item = &'a str>,
        atomic: &[&str],
        max_size: Option<usize>,
    ) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        for a in atomic {
            if !tokens.iter().any(|t| t == a) {
                tokens.push(a.to_string());
            }
        }
        let mut counts: HashMap<&'a str, usize> = HashMap::new();
        for text in texts {
            for word in text.split_whitespace() {
                *counts.entry(word).or_default() += 1;
            }
        }
        let mut by_freq: Vec<(&str, usize)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (word, _) in by_freq {
            if !tokens.iter().any(|t| t == word) {
                tokens.push(word.to_string());
            }
        }
        if let Some(cap) = max_size {
            tokens.truncate(cap.max(4));
        }
        Vocabulary::new(tokens).expect("specials inserted first")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    pub fn unk_id(&self) -> usize {
        self.ids[UNK]
    }

    pub fn cls_id(&self) -> usize {
        self.ids[CLS]
    }

    pub fn sep_id(&self) -> usize {
        self.ids[SEP]
    }
}

/// Fixed-length model input: `[CLS]` + subwords + `[SEP]`, padded with
/// `[PAD]`; `attention_mask` has exactly `content_length` leading ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    pub content_length: usize,
}

/// Greedy longest-prefix pieces of one whitespace token; a token with any
/// un-coverable remainder collapses to a single `[UNK]`.
fn word_pieces(word: &str, vocab: &Vocabulary) -> Vec<usize> {
    let mut pieces = Vec::new();
    let chars: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let mut start = 0; // index into `chars`
    while start + 1 < chars.len() {
        let mut matched = None;
        for end in (start + 1..chars.len()).rev() {
            let piece = &word[chars[start]..chars[end]];
            let candidate = if start == 0 {
                vocab.id_of(piece)
            } else {
                vocab.id_of(&format!("##{piece}"))
            };
            if let Some(id) = candidate {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![vocab.unk_id()],
        }
    }
    pieces
}

/// Tokenizes normalized text to exactly `max_len` ids, keeping the first
/// `max_len - 2` subwords when the text is longer.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    debug_assert!(max_len >= 2);
    let mut pieces = Vec::new();
    'words: for word in text.split_whitespace() {
        for id in word_pieces(word, vocab) {
            if pieces.len() == max_len - 2 {
                break 'words;
            }
            pieces.push(id);
        }
    }
    let content_length = pieces.len() + 2;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(vocab.cls_id());
    ids.extend(&pieces);
    ids.push(vocab.sep_id());
    ids.resize(max_len, vocab.pad_id());
    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..content_length].fill(1);
    TokenSequence {
        ids,
        attention_mask,
        content_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_vocab() -> Vocabulary {
        Vocabulary::new(
            [PAD, UNK, CLS, SEP, "not", "sex", "##ist", "<user>", "a", "##b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_text_is_cls_sep_padding() {
        let v = toy_vocab();
        let seq = tokenize("", &v, 64);
        assert_eq!(seq.content_length, 2);
        assert_eq!(seq.ids[0], v.cls_id());
        assert_eq!(seq.ids[1], v.sep_id());
        assert!(seq.ids[2..].iter().all(|&id| id == v.pad_id()));
        assert_eq!(seq.attention_mask.iter().map(|&m| m as usize).sum::<usize>(), 2);
    }

    #[test]
    fn greedy_longest_match_with_continuations() {
        let v = toy_vocab();
        let seq = tokenize("not sexist", &v, 64);
        let expect = [
            v.cls_id(),
            v.id_of("not").unwrap(),
            v.id_of("sex").unwrap(),
            v.id_of("##ist").unwrap(),
            v.sep_id(),
        ];
        assert_eq!(&seq.ids[..5], &expect);
        assert_eq!(seq.content_length, 5);
        let ones: Vec<usize> = seq
            .attention_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn truncation_keeps_first_pieces() {
        let v = toy_vocab();
        let long = vec!["not"; 100].join(" ");
        let seq = tokenize(&long, &v, 64);
        assert_eq!(seq.content_length, 64);
        assert_eq!(seq.ids[63], v.sep_id());
        assert_eq!(seq.ids[62], v.id_of("not").unwrap());
    }

    #[test]
    fn uncoverable_word_becomes_single_unk() {
        let v = toy_vocab();
        // "ab" matches "a" then "##b"; "zq" matches nothing
        let seq = tokenize("ab zq", &v, 64);
        assert_eq!(
            &seq.ids[1..4],
            &[v.id_of("a").unwrap(), v.id_of("##b").unwrap(), v.unk_id()]
        );
        // partial coverage still collapses to one [UNK]
        let seq = tokenize("az", &v, 64);
        assert_eq!(&seq.ids[1..2], &[v.unk_id()]);
        assert_eq!(seq.content_length, 3);
    }

    #[test]
    fn placeholders_stay_atomic() {
        let v = toy_vocab();
        let seq = tokenize("<user> not", &v, 64);
        assert_eq!(
            &seq.ids[1..3],
            &[v.id_of("<user>").unwrap(), v.id_of("not").unwrap()]
        );
    }

    #[test]
    fn vocabulary_requires_pad_first() {
        let err = Vocabulary::new(vec![UNK.into(), PAD.into(), CLS.into(), SEP.into()]);
        assert!(err.is_err());
    }

    #[test]
    fn builds_deterministic_vocab_from_texts() {
        let texts = ["b a a", "c b a <user>"];
        let v = Vocabulary::build_from_texts(texts.iter().copied(), &["<user>", "<url>"], None);
        // specials, atomics, then a (3), b (2), c (1)
        let toks: Vec<&str> = v.tokens().iter().map(String::as_str).collect();
        assert_eq!(
            toks,
            vec![PAD, UNK, CLS, SEP, "<user>", "<url>", "a", "b", "c"]
        );
        assert_eq!(v.pad_id(), 0);
    }

    #[test]
    fn vocab_file_roundtrip() {
        let v = toy_vocab();
        let mut path = std::env::temp_dir();
        path.push(format!("vocab-test-{}.txt", std::process::id()));
        std::fs::write(&path, v.tokens().join("\n")).unwrap();
        let loaded = Vocabulary::from_file(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(loaded.tokens(), v.tokens());
    }
}
