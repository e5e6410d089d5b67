use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{extract_fragments_by, SentenceSpan, TokenSeq};

/// Denominator of the fragment density.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfdNorm {
    /// `|x|`, the first argument.
    #[default]
    Source,
    /// `|y|`, the convention of the Newsroom tooling.
    Summary,
}

/// Extractive fragments density `Σ |f|² / |x|` over the greedy shared
/// fragments of `x` and `y`.
pub fn efd(x: &TokenSeq, y: &TokenSeq) -> Result<f64> {
    efd_by(x.tokens(), y.tokens(), EfdNorm::Source)
}

pub fn efd_with(x: &TokenSeq, y: &TokenSeq, norm: EfdNorm) -> Result<f64> {
    efd_by(x.tokens(), y.tokens(), norm)
}

pub fn efd_by<T: Eq + Hash>(x: &[T], y: &[T], norm: EfdNorm) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySource);
    }
    let denom = match norm {
        EfdNorm::Source => x.len(),
        EfdNorm::Summary if y.is_empty() => return Ok(0.0),
        EfdNorm::Summary => y.len(),
    };
    let sq: usize = extract_fragments_by(x, y).lengths().map(|l| l * l).sum();
    Ok(sq as f64 / denom as f64)
}

/// Importance of sentence `i`: its density against the remaining sentences
/// concatenated in order.
pub fn gsg_score(doc: &TokenSeq, spans: &[SentenceSpan], i: usize) -> Result<f64> {
    if spans.len() < 2 {
        return Err(Error::TooFewSentences(spans.len()));
    }
    if i >= spans.len() {
        return Err(Error::SentenceIndex {
            index: i,
            count: spans.len(),
        });
    }
    let toks = doc.tokens();
    let sent = &toks[spans[i].start_token..spans[i].end_token];
    let rest: Vec<&String> = spans
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .flat_map(|(_, s)| &toks[s.start_token..s.end_token])
        .collect();
    let sent: Vec<&String> = sent.iter().collect();
    efd_by(&sent, &rest, EfdNorm::Source)
}

pub fn gsg_scores(doc: &TokenSeq, spans: &[SentenceSpan]) -> Result<Vec<f64>> {
    (0..spans.len()).map(|i| gsg_score(doc, spans, i)).collect()
}

/// Mean length of the shared fragments, 0 when there are none.
pub fn copy_length(x: &TokenSeq, y: &TokenSeq) -> f64 {
    copy_length_by(x.tokens(), y.tokens())
}

pub fn copy_length_by<T: Eq + Hash>(x: &[T], y: &[T]) -> f64 {
    let frags = extract_fragments_by(x, y);
    if frags.is_empty() {
        return 0.0;
    }
    frags.lengths().sum::<usize>() as f64 / frags.fragments.len() as f64
}

/// Share of distinct summary n-grams absent from the article.
pub fn ngram_novelty(x: &TokenSeq, y: &TokenSeq, n: usize) -> Result<f64> {
    ngram_novelty_by(x.tokens(), y.tokens(), n)
}

pub fn ngram_novelty_by<T: Eq + Hash>(x: &[T], y: &[T], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroOrder);
    }
    if y.len() < n {
        return Err(Error::SummaryTooShort { len: y.len(), n });
    }
    let src: HashSet<&[T]> = x.windows(n).collect();
    let sum: HashSet<&[T]> = y.windows(n).collect();
    let novel = sum.iter().filter(|g| !src.contains(*g)).count();
    Ok(novel as f64 / sum.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractivenessReport {
    pub efd: f64,
    pub copy_length: f64,
    /// Novelty per n-gram order; orders longer than the summary are absent.
    pub novelty: BTreeMap<usize, f64>,
}

pub fn extractiveness(
    x: &TokenSeq,
    y: &TokenSeq,
    orders: &[usize],
    norm: EfdNorm,
) -> Result<ExtractivenessReport> {
    let mut novelty = BTreeMap::new();
    for &n in orders {
        if n >= 1 && y.len() >= n {
            novelty.insert(n, ngram_novelty(x, y, n)?);
        }
    }
    Ok(ExtractivenessReport {
        efd: efd_with(x, y, norm)?,
        copy_length: copy_length(x, y),
        novelty,
    })
}
