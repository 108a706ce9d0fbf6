//! Tweet normalization: a fixed-order rule pipeline that rewrites raw tweet
//! text into a whitespace-tokenizable form with placeholder tokens for
//! non-lexical content (urls, mentions, emoticons, numbers) and lexicon-driven
//! hashtag segmentation.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Word-frequency list shipped with the crate, used for hashtag segmentation.
pub const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Audit tags in pipeline order. `applied_rules` is always a subsequence.
pub const RULE_ORDER: [&str; 10] = [
    "url",
    "mention",
    "emoticon",
    "hashtag-segmented",
    "hashtag-unsegmentable",
    "number",
    "elongation",
    "punctuation",
    "whitespace",
    "lowercase",
];

// Matched against whole whitespace-delimited literal tokens, before lowercasing.
const EMOTICONS: [&str; 72] = [
    ":)", ":-)", ":(", ":-(", ":D", ":-D", ";)", ";-)", ":P", ":-P", ":p", ":-p",
    ":O", ":-O", ":o", ":-o", ":/", ":-/", ":\\", ":-\\", ":|", ":-|", ":*", ":-*",
    ":s", ":S", ":-s", ":-S", ":$", ":x", ":X", ":-x", ":-X", ":3", "xD", "XD",
    "=)", "=(", "=D", "=P", "=/", "=]", "=[", ":]", ":[", ";D", ";P", ";p",
    "<3", "</3", "^^", "^_^", "^-^", "-_-", "o_O", "O_o", "o_o", "O_O",
    "T_T", ";_;", ":'(", ":')", ">:(", ">:)", "8)", "8-)", "B)", "B-)", ":v", ":V",
    "(:", "):",
];

/// Placeholder tokens emitted by the normalizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholders {
    pub url: String,
    pub mention: String,
    pub emoticon: String,
    pub hashtag: String,
    pub number: String,
}

impl Default for Placeholders {
    fn default() -> Self {
        Placeholders {
            url: "<url>".into(),
            mention: "<user>".into(),
            emoticon: "<emoticon>".into(),
            hashtag: "<hashtag>".into(),
            number: "<number>".into(),
        }
    }
}

impl Placeholders {
    pub fn all(&self) -> [&str; 5] {
        [&self.url, &self.mention, &self.emoticon, &self.hashtag, &self.number]
    }
}

/// Word-frequency lexicon backing hashtag segmentation.
#[derive(Debug, Clone)]
pub struct Lexicon {
    counts: HashMap<String, f64>,
    total: f64,
    max_len: usize,
}

impl Lexicon {
    /// Parses `word<TAB>count` lines. `origin` names the source in errors.
    pub fn parse(src: &str, origin: &str) -> Result<Self> {
        let mut counts = HashMap::new();
        let mut total = 0.0;
        let mut max_len = 0;
        for (i, line) in src.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (word, count) = line.split_once('\t').ok_or_else(|| {
                PipelineError::InvalidConfig(format!(
                    "{origin}:{}: expected word<TAB>count, got {line:?}",
                    i + 1
                ))
            })?;
            let count: f64 = count.parse().map_err(|_| {
                PipelineError::InvalidConfig(format!(
                    "{origin}:{}: count {count:?} is not a number",
                    i + 1
                ))
            })?;
            if word.is_empty() || !count.is_finite() || count <= 0.0 {
                return Err(PipelineError::InvalidConfig(format!(
                    "{origin}:{}: empty word or non-positive count",
                    i + 1
                )));
            }
            max_len = max_len.max(word.len());
            total += count;
            counts.insert(word.to_string(), count);
        }
        if counts.is_empty() {
            return Err(PipelineError::InvalidConfig(format!("{origin}: empty lexicon")));
        }
        Ok(Lexicon { counts, total, max_len })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
        Lexicon::parse(&src, &path.display().to_string())
    }

    pub fn embedded() -> Self {
        Lexicon::parse(DEFAULT_LEXICON, "embedded lexicon").expect("shipped lexicon is valid")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    /// Log relative frequency, the DP score of one segmentation piece.
    fn score(&self, word: &str) -> Option<f64> {
        self.counts.get(word).map(|c| (c / self.total).ln())
    }
}

/// Settings for [`normalize`]. Construct via [`NormalizerConfig::new`] so the
/// placeholder strings are validated and the regexes compile once.
#[derive(Debug, Clone)]
pub struct NormalizerConfig {
    pub placeholders: Placeholders,
    pub run_threshold: usize,
    pub lowercase: bool,
    lexicon: Lexicon,
    url_re: Regex,
    mention_re: Regex,
    hashtag_re: Regex,
    emoticons: HashSet<&'static str>,
}

impl NormalizerConfig {
    pub fn new(
        placeholders: Placeholders,
        run_threshold: usize,
        lowercase: bool,
        lexicon: Lexicon,
    ) -> Result<Self> {
        if run_threshold < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "elongation threshold must be >= 2, got {run_threshold}"
            )));
        }
        let all = placeholders.all();
        for p in all {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(PipelineError::InvalidConfig(format!(
                    "placeholder {p:?} must be nonempty and whitespace-free"
                )));
            }
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i] == all[j] {
                    return Err(PipelineError::InvalidConfig(format!(
                        "duplicate placeholder {:?}",
                        all[i]
                    )));
                }
            }
        }
        Ok(NormalizerConfig {
            placeholders,
            run_threshold,
            lowercase,
            lexicon,
            url_re: Regex::new(r"(?i)\bhttps?://\S+|\bwww\.\S+").expect("static regex"),
            mention_re: Regex::new(r"@\w+").expect("static regex"),
            hashtag_re: Regex::new(r"#[A-Za-z0-9_]+").expect("static regex"),
            emoticons: EMOTICONS.iter().copied().collect(),
        })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig::new(Placeholders::default(), 3, true, Lexicon::embedded())
            .expect("default settings are valid")
    }
}

/// Normalized text plus which rules fired, in pipeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub text: String,
    pub applied_rules: Vec<String>,
}

#[derive(Debug, Clone)]
enum Seg {
    Lit(String),
    Ph(String),
}

/// Collapses every character run of `threshold` or more down to one character.
pub fn collapse_elongation(word: &str, threshold: usize) -> String {
    let mut out: Vec<char> = Vec::with_capacity(word.len());
    let mut run_char = '\0';
    let mut run_len = 0usize;
    for c in word.chars() {
        if c == run_char {
            run_len += 1;
        } else {
            run_char = c;
            run_len = 1;
        }
        if run_len < threshold {
            out.push(c);
        } else if run_len == threshold {
            out.truncate(out.len() - (threshold - 1));
            out.push(c);
        }
    }
    out.into_iter().collect()
}

fn camel_fragments(body: &str) -> Vec<String> {
    let mut frags = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_alphabetic() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let run = &bytes[start..i];
        let mut frag_start = 0;
        for k in 1..run.len() {
            let boundary = run[k].is_ascii_uppercase()
                && (run[k - 1].is_ascii_lowercase()
                    || (k + 1 < run.len() && run[k + 1].is_ascii_lowercase()));
            if boundary {
                frags.push(String::from_utf8_lossy(&run[frag_start..k]).into_owned());
                frag_start = k;
            }
        }
        frags.push(String::from_utf8_lossy(&run[frag_start..]).into_owned());
    }
    frags
}

/// Max-product-of-frequency cover of `frag` (already lowercased) by lexicon
/// words, or None when no full cover exists.
fn dp_cover<'a>(frag: &'a str, lexicon: &Lexicon) -> Option<Vec<&'a str>> {
    let n = frag.len();
    let mut dp = vec![f64::NEG_INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    dp[0] = 0.0;
    for i in 1..=n {
        for len in 1..=i.min(lexicon.max_len) {
            let j = i - len;
            if dp[j] == f64::NEG_INFINITY {
                continue;
            }
            if let Some(s) = lexicon.score(&frag[j..i]) {
                let cand = dp[j] + s;
                if cand > dp[i] {
                    dp[i] = cand;
                    back[i] = j;
                }
            }
        }
    }
    if dp[n] == f64::NEG_INFINITY {
        return None;
    }
    let mut pieces = Vec::new();
    let mut i = n;
    while i > 0 {
        let j = back[i];
        pieces.push(&frag[j..i]);
        i = j;
    }
    pieces.reverse();
    Some(pieces)
}

fn try_segment(body: &str, lexicon: &Lexicon) -> Option<String> {
    let frags = camel_fragments(body);
    if frags.is_empty() {
        return None;
    }
    let mut words: Vec<String> = Vec::new();
    for frag in &frags {
        let lower = frag.to_ascii_lowercase();
        let cover = dp_cover(&lower, lexicon)?;
        words.extend(cover.iter().map(|w| w.to_string()));
    }
    Some(words.join(" "))
}

/// Splits a hashtag (leading `#` optional) into lexicon words; falls back to
/// the lowercased body when no full cover exists.
pub fn segment_hashtag(tag: &str, lexicon: &Lexicon) -> String {
    let body = tag.strip_prefix('#').unwrap_or(tag);
    try_segment(body, lexicon).unwrap_or_else(|| body.to_lowercase())
}

/// Rewrites literal segments so regex matches become placeholder segments
/// produced by `on_match`; returns whether anything matched.
fn apply_regex<F>(segs: Vec<Seg>, rx: &Regex, mut on_match: F) -> (Vec<Seg>, bool)
where
    F: FnMut(&str) -> Seg,
{
    let mut out = Vec::with_capacity(segs.len());
    let mut fired = false;
    for seg in segs {
        let text = match seg {
            Seg::Ph(_) => {
                out.push(seg);
                continue;
            }
            Seg::Lit(t) => t,
        };
        let mut pos = 0;
        for m in rx.find_iter(&text) {
            if m.start() > pos {
                out.push(Seg::Lit(text[pos..m.start()].to_string()));
            }
            out.push(on_match(m.as_str()));
            fired = true;
            pos = m.end();
        }
        if pos < text.len() {
            out.push(Seg::Lit(text[pos..].to_string()));
        }
    }
    (out, fired)
}

/// Applies the normalization pipeline. Total: never fails, `""` maps to `""`.
pub fn normalize(raw: &str, cfg: &NormalizerConfig) -> NormalizedText {
    let mut applied: HashSet<&'static str> = HashSet::new();
    let ph = &cfg.placeholders;

    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined != raw {
        applied.insert("whitespace");
    }

    // Step 0: tokens already equal to a placeholder stay atomic, which makes
    // the pipeline idempotent on its own output.
    let ph_set: HashSet<&str> = ph.all().into_iter().collect();
    let mut segs: Vec<Seg> = raw
        .split_whitespace()
        .map(|t| {
            if ph_set.contains(t) {
                Seg::Ph(t.to_string())
            } else {
                Seg::Lit(t.to_string())
            }
        })
        .collect();

    // 1: urls, 2: mentions
    let (next, fired) = apply_regex(segs, &cfg.url_re, |_| Seg::Ph(ph.url.clone()));
    segs = next;
    if fired {
        applied.insert("url");
    }
    let (next, fired) = apply_regex(segs, &cfg.mention_re, |_| Seg::Ph(ph.mention.clone()));
    segs = next;
    if fired {
        applied.insert("mention");
    }

    // 3: emoticons are matched as whole literal segments
    for seg in segs.iter_mut() {
        if let Seg::Lit(t) = seg {
            if cfg.emoticons.contains(t.as_str()) {
                applied.insert("emoticon");
                *seg = Seg::Ph(ph.emoticon.clone());
            }
        }
    }

    // 4: hashtags, segmented when the lexicon fully covers the body
    let (next, _) = apply_regex(segs, &cfg.hashtag_re, |m| {
        match try_segment(&m[1..], &cfg.lexicon) {
            Some(words) => {
                applied.insert("hashtag-segmented");
                Seg::Lit(words)
            }
            None => {
                applied.insert("hashtag-unsegmentable");
                Seg::Ph(ph.hashtag.clone())
            }
        }
    });
    segs = next;

    // Token rules 5-9: flatten literals into whitespace-delimited words.
    let mut items: Vec<Seg> = Vec::with_capacity(segs.len());
    for seg in segs {
        match seg {
            Seg::Ph(t) => items.push(Seg::Ph(t)),
            Seg::Lit(t) => items.extend(t.split_whitespace().map(|w| Seg::Lit(w.to_string()))),
        }
    }

    // 5: digit runs at token edges become <number>; pure-digit tokens entirely
    let mut out: Vec<Seg> = Vec::with_capacity(items.len());
    for item in items {
        let word = match item {
            Seg::Lit(w) if w.bytes().any(|b| b.is_ascii_digit()) => w,
            other => {
                out.push(other);
                continue;
            }
        };
        let lead = word.bytes().take_while(|b| b.is_ascii_digit()).count();
        if lead > 0 {
            applied.insert("number");
            out.push(Seg::Ph(ph.number.clone()));
        }
        let rest = &word[lead..];
        let trail = rest.bytes().rev().take_while(|b| b.is_ascii_digit()).count();
        let mid = &rest[..rest.len() - trail];
        if !mid.is_empty() {
            out.push(Seg::Lit(mid.to_string()));
        }
        if trail > 0 {
            applied.insert("number");
            out.push(Seg::Ph(ph.number.clone()));
        }
    }
    items = out;

    // 6: elongation
    for item in items.iter_mut() {
        if let Seg::Lit(w) = item {
            let collapsed = collapse_elongation(w, cfg.run_threshold);
            if collapsed != *w {
                applied.insert("elongation");
                *w = collapsed;
            }
        }
    }

    // 7: keep ascii letters only; removal can merge runs, so collapse again
    let mut out: Vec<Seg> = Vec::with_capacity(items.len());
    for item in items {
        let word = match item {
            Seg::Lit(w) => w,
            ph_seg => {
                out.push(ph_seg);
                continue;
            }
        };
        let kept: String = word.chars().filter(char::is_ascii_alphabetic).collect();
        let kept = if kept != word {
            applied.insert("punctuation");
            collapse_elongation(&kept, cfg.run_threshold)
        } else {
            kept
        };
        if !kept.is_empty() {
            out.push(Seg::Lit(kept));
        }
    }
    items = out;

    // 9: lowercase (8, whitespace collapse, is the single-space join below).
    // Case-folding can merge runs ("NnN" -> "nnn"), so collapse once more.
    if cfg.lowercase {
        for item in items.iter_mut() {
            if let Seg::Lit(w) = item {
                if w.bytes().any(|b| b.is_ascii_uppercase()) {
                    applied.insert("lowercase");
                    *w = collapse_elongation(&w.to_ascii_lowercase(), cfg.run_threshold);
                }
            }
        }
    }

    let text = items
        .iter()
        .map(|s| match s {
            Seg::Lit(t) | Seg::Ph(t) => t.as_str(),
        })
        .collect::<Vec<_>>()
        .join(" ");
    let applied_rules = RULE_ORDER
        .iter()
        .filter(|r| applied.contains(*r))
        .map(|r| r.to_string())
        .collect();
    NormalizedText { text, applied_rules }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> NormalizerConfig {
        NormalizerConfig::default()
    }

    #[test]
    fn collapses_long_runs_only() {
        assert_eq!(collapse_elongation("yeeeessss", 3), "yes");
        assert_eq!(collapse_elongation("good", 3), "good");
        assert_eq!(collapse_elongation("sooooo", 3), "so");
        assert_eq!(collapse_elongation("", 3), "");
        assert_eq!(collapse_elongation("aab", 3), "aab");
        assert_eq!(collapse_elongation("aaab", 3), "ab");
    }

    #[test]
    fn collapse_matches_brute_force() {
        // independent restatement: run-length encode, shorten runs of >= k to 1
        fn brute(word: &str, k: usize) -> String {
            let chars: Vec<char> = word.chars().collect();
            let mut out = String::new();
            let mut i = 0;
            while i < chars.len() {
                let run = chars[i..].iter().take_while(|&&c| c == chars[i]).count();
                let keep = if run >= k { 1 } else { run };
                out.extend(std::iter::repeat(chars[i]).take(keep));
                i += run;
            }
            out
        }
        let words = ["aaaa", "aabbaa", "xyzzzzy", "mississippi", "zzzzzzzz", "abc"];
        for w in words {
            for k in 2..5 {
                assert_eq!(collapse_elongation(w, k), brute(w, k), "{w} k={k}");
            }
        }
    }

    #[test]
    fn segments_known_hashtags() {
        let lex = Lexicon::embedded();
        assert_eq!(segment_hashtag("#notsexist", &lex), "not sexist");
        assert_eq!(segment_hashtag("#BanTheBurka", &lex), "ban the burka");
        assert_eq!(segment_hashtag("#a", &lex), "a");
        assert_eq!(segment_hashtag("#FreeSpeech", &lex), "free speech");
        // no cover -> lowercased body
        assert_eq!(segment_hashtag("#xqzvwk", &lex), "xqzvwk");
    }

    #[test]
    fn normalizes_composite_example() {
        let got = normalize("@Jane1 sooo wrong!!! #notsexist http://t.co/x", &cfg());
        assert_eq!(got.text, "<user> so wrong not sexist <url>");
        assert_eq!(
            got.applied_rules,
            vec!["url", "mention", "hashtag-segmented", "elongation", "punctuation"]
        );
    }

    #[test]
    fn unchanged_text_reports_no_rules() {
        let got = normalize("good", &cfg());
        assert_eq!(got.text, "good");
        assert!(got.applied_rules.is_empty());
    }

    #[test]
    fn empty_input_maps_to_empty() {
        let got = normalize("", &cfg());
        assert_eq!(got.text, "");
        assert!(got.applied_rules.is_empty());
    }

    #[test]
    fn placeholders_pass_through() {
        let got = normalize("<user> already normalized <url>", &cfg());
        assert_eq!(got.text, "<user> already normalized <url>");
        assert!(got.applied_rules.is_empty());
    }

    #[test]
    fn edge_digits_become_number_tokens() {
        assert_eq!(normalize("5pm", &cfg()).text, "<number> pm");
        assert_eq!(normalize("top10", &cfg()).text, "top <number>");
        assert_eq!(normalize("2014", &cfg()).text, "<number>");
    }

    #[test]
    fn punctuation_removal_recollapses_runs() {
        assert_eq!(normalize("aa!a", &cfg()).text, "a");
    }

    #[test]
    fn unsegmentable_hashtag_becomes_placeholder() {
        let got = normalize("#2014", &cfg());
        assert_eq!(got.text, "<hashtag>");
        assert_eq!(got.applied_rules, vec!["hashtag-unsegmentable"]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(NormalizerConfig::new(Placeholders::default(), 1, true, Lexicon::embedded())
            .is_err());
        let mut ph = Placeholders::default();
        ph.url = "<two words>".into();
        assert!(NormalizerConfig::new(ph, 3, true, Lexicon::embedded()).is_err());
        let mut ph = Placeholders::default();
        ph.url = ph.mention.clone();
        assert!(NormalizerConfig::new(ph, 3, true, Lexicon::embedded()).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "\\PC{0,80}") {
            let c = cfg();
            let once = normalize(&raw, &c);
            let twice = normalize(&once.text, &c);
            prop_assert_eq!(&twice.text, &once.text);
        }

        #[test]
        fn output_has_no_long_runs_or_ragged_spacing(raw in "\\PC{0,80}") {
            let c = cfg();
            let out = normalize(&raw, &c).text;
            prop_assert!(!out.starts_with(' ') && !out.ends_with(' '));
            prop_assert!(!out.contains("  "));
            let ph_set: HashSet<&str> = c.placeholders.all().into_iter().collect();
            for tok in out.split(' ').filter(|t| !t.is_empty()) {
                if ph_set.contains(tok) {
                    continue;
                }
                prop_assert_eq!(
                    collapse_elongation(tok, c.run_threshold),
                    tok.to_string(),
                    "run of >= {} in {:?}", c.run_threshold, tok
                );
            }
        }

        #[test]
        fn placeholder_tokens_survive(words in proptest::collection::vec(
            prop_oneof![
                "[a-z]{1,8}".prop_map(|w| w),
                Just("<user>".to_string()),
                Just("<url>".to_string()),
                Just("<number>".to_string()),
                Just("<hashtag>".to_string()),
                Just("<emoticon>".to_string()),
            ],
            0..12,
        )) {
            let c = cfg();
            let raw = words.join(" ");
            let out = normalize(&raw, &c);
            let ph_set: HashSet<&str> = c.placeholders.all().into_iter().collect();
            let got: Vec<&str> =
                out.text.split_whitespace().filter(|t| ph_set.contains(t)).collect();
            let expect: Vec<&str> = words
                .iter()
                .map(|s| s.as_str())
                .filter(|t| ph_set.contains(t))
                .collect();
            prop_assert_eq!(got, expect);
        }

        #[test]
        fn normalize_is_deterministic(raw in "\\PC{0,80}") {
            let c = cfg();
            prop_assert_eq!(normalize(&raw, &c), normalize(&raw, &c));
        }
    }
}
