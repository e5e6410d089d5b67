use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::Prf;
use crate::textcore::{tokenize, TokenSeq};

/// Normalized entity strings: case-folded, single-space separated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub entities: BTreeSet<String>,
}

impl EntitySet {
    pub fn insert(&mut self, raw: &str) {
        let norm = raw
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        if !norm.is_empty() {
            self.entities.insert(norm);
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for EntitySet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = EntitySet::default();
        for s in iter {
            set.insert(s.as_ref());
        }
        set
    }
}

/// Deterministic entity extractor.
pub trait EntityRecognizer: Send + Sync {
    fn entities(&self, seq: &TokenSeq) -> EntitySet;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "he", "she", "it", "we", "they", "i",
    "you", "his", "her", "its", "our", "their", "my", "your", "in", "on", "at", "of", "for",
    "to", "from", "by", "with", "and", "but", "or", "if", "when", "while", "after", "before",
    "as", "so", "then", "there", "here", "what", "who", "which", "where", "why", "how", "is",
    "are", "was", "were", "be", "been", "has", "have", "had", "do", "does", "did", "not", "no",
    "yes", "all", "some", "many", "most", "one", "also", "however", "but", "yet",
];

/// Maximal runs of capitalized word tokens, dropping a run that is a single
/// stopword at the start of a sentence, plus any gazetteer phrase found in
/// the text.
#[derive(Debug, Clone)]
pub struct CapitalizedRunRecognizer {
    stopwords: HashSet<&'static str>,
    gazetteer: Vec<Vec<String>>,
}

impl Default for CapitalizedRunRecognizer {
    fn default() -> Self {
        CapitalizedRunRecognizer {
            stopwords: STOPWORDS.iter().copied().collect(),
            gazetteer: Vec::new(),
        }
    }
}

impl CapitalizedRunRecognizer {
    /// Adds gazetteer entries, one per line.
    pub fn with_gazetteer(mut self, list: &str) -> Self {
        for line in list.lines() {
            let toks = tokenize(line.trim(), true).tokens().to_vec();
            if !toks.is_empty() {
                self.gazetteer.push(toks);
            }
        }
        self
    }
}

fn is_capitalized_word(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(char::is_uppercase) && s.chars().all(char::is_alphanumeric)
}

impl EntityRecognizer for CapitalizedRunRecognizer {
    fn entities(&self, seq: &TokenSeq) -> EntitySet {
        let mut out = EntitySet::default();
        let n = seq.len();
        let mut i = 0;
        while i < n {
            if !is_capitalized_word(seq.surface(i)) {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && is_capitalized_word(seq.surface(i)) {
                i += 1;
            }
            let sentence_initial = start == 0 || matches!(seq.surface(start - 1), "." | "!" | "?" | "\"");
            let lone_stop = i - start == 1 && self.stopwords.contains(seq.surface(start).to_lowercase().as_str());
            if sentence_initial && lone_stop {
                continue;
            }
            let words: Vec<&str> = (start..i).map(|k| seq.surface(k)).collect();
            out.insert(&words.join(" "));
        }
        if !self.gazetteer.is_empty() {
            let folded: Vec<String> = seq.tokens().iter().map(|t| t.to_lowercase()).collect();
            for entry in &self.gazetteer {
                if folded.windows(entry.len()).any(|w| w == entry.as_slice()) {
                    out.insert(&entry.join(" "));
                }
            }
        }
        out
    }
}

/// Entity coverage of a prediction against its reference.
pub fn entity_prf(reference: &TokenSeq, pred: &TokenSeq, recognizer: &dyn EntityRecognizer) -> Prf {
    let gold = recognizer.entities(reference);
    let sys = recognizer.entities(pred);
    let hits = gold.entities.intersection(&sys.entities).count();
    Prf::from_counts(hits, sys.len(), gold.len())
}
