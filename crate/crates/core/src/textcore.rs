//! Tokenization, sentence splitting, n-gram extraction and greedy shared
//! fragment extraction. Everything downstream (copy labels, metrics, pseudo
//! data) works on the types defined here.
//!
//! The sequence algorithms are generic over the token type so the same code
//! serves word strings and the integer ids of the numeric core.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokenized text. Offsets are byte spans into `text`, the original string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    text: String,
    tokens: Vec<String>,
    offsets: Vec<(usize, usize)>,
    folded: bool,
}

impl TokenSeq {
    /// Builds a sequence from ready-made tokens, joining them with single
    /// spaces to form the backing text.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut text = String::new();
        let mut offsets = Vec::with_capacity(tokens.len());
        let mut out = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(t.as_ref());
            offsets.push((start, text.len()));
            out.push(t.as_ref().to_string());
        }
        TokenSeq {
            text,
            tokens: out,
            offsets,
            folded: false,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Byte ranges of each token in the original text.
    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The token as it appears in the original text, before case folding.
    pub fn surface(&self, i: usize) -> &str {
        let (s, e) = self.offsets[i];
        &self.text[s..e]
    }

    /// Text between the end of token `i - 1` and the start of token `i`.
    fn gap_before(&self, i: usize) -> &str {
        let start = if i == 0 { 0 } else { self.offsets[i - 1].1 };
        &self.text[start..self.offsets[i].0]
    }
}

/// Tokenizer boundary. The default is [`WordTokenizer`]; a sub-word
/// implementation can be slotted in behind the same trait.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> TokenSeq;
}

/// Splits on whitespace; runs of alphanumeric characters form one token and
/// every other non-space character is a token of its own.
#[derive(Debug, Clone, Copy)]
pub struct WordTokenizer {
    pub fold_case: bool,
}

impl Default for WordTokenizer {
    fn default() -> Self {
        WordTokenizer { fold_case: true }
    }
}

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> TokenSeq {
        tokenize(text, self.fold_case)
    }
}

pub fn tokenize(text: &str, fold_case: bool) -> TokenSeq {
    let mut offsets = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            offsets.push((s, i));
        }
        if !c.is_whitespace() {
            offsets.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = word_start {
        offsets.push((s, text.len()));
    }
    let tokens = offsets
        .iter()
        .map(|&(s, e)| {
            let t = &text[s..e];
            if fold_case {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect();
    TokenSeq {
        text: text.to_string(),
        tokens,
        offsets,
        folded: fold_case,
    }
}

/// Half-open token range `[start_token, end_token)` holding one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start_token: usize,
    pub end_token: usize,
}

impl SentenceSpan {
    pub fn len(&self) -> usize {
        self.end_token - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Words whose trailing period never ends a sentence.
#[derive(Debug, Clone, Default)]
pub struct AbbreviationGuard {
    words: HashSet<String>,
}

impl AbbreviationGuard {
    /// The list shipped in `data/abbreviations.txt`.
    pub fn bundled() -> Self {
        Self::from_list(BUNDLED_ABBREVIATIONS)
    }

    /// No guard: every qualifying period is a boundary.
    pub fn none() -> Self {
        Self::default()
    }

    /// One abbreviation per line, without the final period. Blank lines and
    /// lines starting with `#` are ignored; matching is case-insensitive.
    pub fn from_list(list: &str) -> Self {
        let words = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.trim_end_matches('.').to_lowercase())
            .collect();
        AbbreviationGuard { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

fn is_closing(tok: &str) -> bool {
    matches!(tok, "\"" | "'" | ")" | "]" | "\u{201d}" | "\u{2019}")
}

fn is_opening(tok: &str) -> bool {
    matches!(tok, "\"" | "'" | "(" | "[" | "\u{201c}" | "\u{2018}")
}

fn starts_upper(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

/// Rule-based sentence splitter. A boundary follows `.`, `!` or `?` (plus
/// any directly attached closing quotes or brackets) when the next token is
/// separated by whitespace and starts with a capital letter, possibly after
/// an opening quote.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    guard: AbbreviationGuard,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter {
            guard: AbbreviationGuard::bundled(),
        }
    }
}

impl SentenceSplitter {
    pub fn new(guard: AbbreviationGuard) -> Self {
        SentenceSplitter { guard }
    }

    /// Attached word preceding the period at token `i`, e.g. `u.s` for
    /// `U.S.` or `dr` for `(Dr.`.
    fn word_before(&self, seq: &TokenSeq, i: usize) -> String {
        let mut j = i;
        while j > 0 && seq.gap_before(j).is_empty() {
            j -= 1;
        }
        let start = seq.offsets[j].0;
        let end = seq.offsets[i].0;
        seq.text[start..end]
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_string()
    }

    fn is_abbreviation(&self, seq: &TokenSeq, i: usize) -> bool {
        if self.guard.is_empty() || seq.surface(i) != "." || i == 0 {
            return false;
        }
        if !seq.gap_before(i).is_empty() {
            return false;
        }
        let word = self.word_before(seq, i);
        !word.is_empty() && self.guard.contains(&word)
    }

    /// Sentence spans over an existing tokenization. The spans partition the
    /// tokens in order; an empty sequence has no spans.
    pub fn split_tokens(&self, seq: &TokenSeq) -> Vec<SentenceSpan> {
        let n = seq.len();
        let mut spans = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < n {
            if !is_terminal(seq.surface(i)) || self.is_abbreviation(seq, i) {
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < n && seq.gap_before(j).is_empty() && is_closing(seq.surface(j)) {
                j += 1;
            }
            if j >= n {
                break;
            }
            let spaced = seq.gap_before(j).chars().any(char::is_whitespace);
            let capital = starts_upper(seq.surface(j))
                || (is_opening(seq.surface(j)) && j + 1 < n && starts_upper(seq.surface(j + 1)));
            if spaced && capital {
                spans.push(SentenceSpan {
                    start_token: start,
                    end_token: j,
                });
                start = j;
            }
            i = j;
        }
        if start < n {
            spans.push(SentenceSpan {
                start_token: start,
                end_token: n,
            });
        }
        spans
    }

    pub fn split(&self, text: &str) -> Vec<SentenceSpan> {
        self.split_tokens(&tokenize(text, false))
    }
}

/// Sentence spans over `tokenize(text, _)` using the bundled guard list.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    SentenceSplitter::default().split(text)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NGram {
    pub items: Vec<String>,
}

impl NGram {
    pub fn n(&self) -> usize {
        self.items.len()
    }
}

/// Multiset of n-grams with their counts.
pub type NGramCounts = BTreeMap<NGram, usize>;

pub fn extract_ngrams(seq: &TokenSeq, n: usize) -> Result<NGramCounts> {
    if n == 0 {
        return Err(Error::ZeroOrder);
    }
    let mut counts = NGramCounts::new();
    for w in seq.tokens().windows(n) {
        *counts
            .entry(NGram {
                items: w.to_vec(),
            })
            .or_insert(0) += 1;
    }
    Ok(counts)
}

/// Distinct n-gram windows of `tokens`, borrowed. Panics on `n == 0`.
pub fn ngram_set<T: Eq + Hash>(tokens: &[T], n: usize) -> HashSet<&[T]> {
    assert!(n > 0, "n-gram order must be at least 1");
    tokens.windows(n).collect()
}

/// A run shared verbatim by `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub src_start: usize,
    pub tgt_start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSet {
    pub fragments: Vec<Fragment>,
    pub x_len: usize,
    pub y_len: usize,
}

impl FragmentSet {
    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.fragments.iter().map(|f| f.length)
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }
}

/// Greedy shared-fragment decomposition. Scans `y` left to right; at each
/// position takes the longest run that also occurs in `x` (leftmost `x`
/// occurrence on ties) and skips past it. Unmatched tokens advance by one.
pub fn extract_fragments_by<T: Eq + Hash>(x: &[T], y: &[T]) -> FragmentSet {
    let mut index: HashMap<&T, Vec<usize>> = HashMap::new();
    for (i, t) in x.iter().enumerate() {
        index.entry(t).or_default().push(i);
    }
    let mut fragments = Vec::new();
    let mut j = 0;
    while j < y.len() {
        let mut best = (0usize, 0usize);
        if let Some(starts) = index.get(&y[j]) {
            for &i in starts {
                let len = x[i..]
                    .iter()
                    .zip(&y[j..])
                    .take_while(|(a, b)| a == b)
                    .count();
                if len > best.1 {
                    best = (i, len);
                }
            }
        }
        if best.1 > 0 {
            fragments.push(Fragment {
                src_start: best.0,
                tgt_start: j,
                length: best.1,
            });
            j += best.1;
        } else {
            j += 1;
        }
    }
    FragmentSet {
        fragments,
        x_len: x.len(),
        y_len: y.len(),
    }
}

pub fn extract_fragments(x: &TokenSeq, y: &TokenSeq) -> FragmentSet {
    extract_fragments_by(x.tokens(), y.tokens())
}
