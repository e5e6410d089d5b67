//! ROUGE-1/2/L/Lsum F-measures. No stemming and no stopword removal; tokens
//! are case-folded words with pure punctuation dropped, the same way the
//! `rouge-score` tokenizer treats non-alphanumerics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textcore::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RougeVariant {
    Rouge1,
    Rouge2,
    RougeL,
    RougeLsum,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 4] = [
        RougeVariant::Rouge1,
        RougeVariant::Rouge2,
        RougeVariant::RougeL,
        RougeVariant::RougeLsum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RougeVariant::Rouge1 => "rouge1",
            RougeVariant::Rouge2 => "rouge2",
            RougeVariant::RougeL => "rougeL",
            RougeVariant::RougeLsum => "rougeLsum",
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RougeVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown ROUGE variant `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub variant: RougeVariant,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_hits(variant: RougeVariant, hits: usize, pred_len: usize, ref_len: usize) -> Self {
        let p = super::Prf::from_counts(hits, pred_len, ref_len);
        RougeScore {
            variant,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
        }
    }
}

pub fn rouge_tokens(text: &str) -> Vec<String> {
    let seq = tokenize(text, true);
    seq.tokens()
        .iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .cloned()
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn rouge_n(pred: &[String], reference: &[String], n: usize, variant: RougeVariant) -> RougeScore {
    let p = ngram_counts(pred, n);
    let r = ngram_counts(reference, n);
    let hits = r
        .iter()
        .map(|(g, &c)| c.min(p.get(g).copied().unwrap_or(0)))
        .sum();
    let pred_len = pred.len().saturating_sub(n - 1);
    let ref_len = reference.len().saturating_sub(n - 1);
    RougeScore::from_hits(variant, hits, pred_len, ref_len)
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

/// Indices into `reference` of one longest common subsequence.
fn lcs_indices(reference: &[String], cand: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, cand);
    let (mut i, mut j) = (reference.len(), cand.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == cand[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

fn rouge_lsum(pred: &str, reference: &str) -> RougeScore {
    let sents = |s: &str| -> Vec<Vec<String>> {
        s.split('\n')
            .map(rouge_tokens)
            .filter(|t| !t.is_empty())
            .collect()
    };
    let pred_s = sents(pred);
    let ref_s = sents(reference);
    let pred_len: usize = pred_s.iter().map(Vec::len).sum();
    let ref_len: usize = ref_s.iter().map(Vec::len).sum();
    let mut pred_counts: HashMap<&String, usize> = HashMap::new();
    for t in pred_s.iter().flatten() {
        *pred_counts.entry(t).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&String, usize> = HashMap::new();
    for t in ref_s.iter().flatten() {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    let mut hits = 0;
    for r in &ref_s {
        let union: BTreeSet<usize> = pred_s.iter().flat_map(|c| lcs_indices(r, c)).collect();
        for idx in union {
            let tok = &r[idx];
            let rc = ref_counts.get_mut(tok).expect("token counted");
            let pc = pred_counts.entry(tok).or_insert(0);
            if *rc > 0 && *pc > 0 {
                hits += 1;
                *rc -= 1;
                *pc -= 1;
            }
        }
    }
    RougeScore::from_hits(RougeVariant::RougeLsum, hits, pred_len, ref_len)
}

pub fn rouge_f1(pred: &str, reference: &str, variant: RougeVariant) -> RougeScore {
    match variant {
        RougeVariant::Rouge1 => rouge_n(&rouge_tokens(pred), &rouge_tokens(reference), 1, variant),
        RougeVariant::Rouge2 => rouge_n(&rouge_tokens(pred), &rouge_tokens(reference), 2, variant),
        RougeVariant::RougeL => {
            let p = rouge_tokens(pred);
            let r = rouge_tokens(reference);
            let lcs = lcs_table(&p, &r)[p.len()][r.len()];
            RougeScore::from_hits(variant, lcs, p.len(), r.len())
        }
        RougeVariant::RougeLsum => rouge_lsum(pred, reference),
    }
}
