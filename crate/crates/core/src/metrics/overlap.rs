use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::Prf;
use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

/// Agreement between the n-grams that should be copied (shared by source and
/// reference) and those actually copied (shared by source and prediction).
pub fn copied_ngram_f1(src: &TokenSeq, reference: &TokenSeq, pred: &TokenSeq, n: usize) -> Result<Prf> {
    copied_ngram_f1_by(src.tokens(), reference.tokens(), pred.tokens(), n)
}

pub fn copied_ngram_f1_by<T: Eq + Hash>(src: &[T], reference: &[T], pred: &[T], n: usize) -> Result<Prf> {
    if n == 0 {
        return Err(Error::ZeroOrder);
    }
    let src: HashSet<&[T]> = src.windows(n).collect();
    let ought: HashSet<&[T]> = reference.windows(n).filter(|g| src.contains(g)).collect();
    let actual: HashSet<&[T]> = pred.windows(n).filter(|g| src.contains(g)).collect();
    let hits = ought.intersection(&actual).count();
    Ok(Prf::from_counts(hits, actual.len(), ought.len()))
}

/// Where a matched source window is located.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionStat {
    #[default]
    Start,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionHistogram {
    pub bins: usize,
    /// Per-bin share of all overlaps; all zero when there were none.
    pub mass: Vec<f64>,
}

/// Integer bin counts; merging partial accumulators is associative and
/// commutative, so parallel shards combine to the same histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramAccumulator {
    n: usize,
    stat: PositionStat,
    counts: Vec<u64>,
}

impl HistogramAccumulator {
    pub fn new(n: usize, bins: usize, stat: PositionStat) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroOrder);
        }
        if bins < 2 {
            return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
        }
        Ok(HistogramAccumulator {
            n,
            stat,
            counts: vec![0; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add_position(&mut self, pos: f64) {
        let bins = self.counts.len();
        let b = ((pos.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
        self.counts[b] += 1;
    }

    /// Records every source window whose n-gram also occurs in the summary.
    pub fn add_pair<T: Eq + Hash>(&mut self, src: &[T], tgt: &[T]) {
        let n = self.n;
        if src.len() < n || tgt.len() < n {
            return;
        }
        let targets: HashSet<&[T]> = tgt.windows(n).collect();
        let last = (src.len() - 1) as f64;
        for (i, w) in src.windows(n).enumerate() {
            if !targets.contains(w) {
                continue;
            }
            let at = match self.stat {
                PositionStat::Start => i as f64,
                PositionStat::Midpoint => i as f64 + (n - 1) as f64 / 2.0,
            };
            let pos = if src.len() == 1 { 0.0 } else { at / last };
            self.add_position(pos);
        }
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) {
        assert_eq!(self.counts.len(), other.counts.len(), "bin counts differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn finish(&self) -> PositionHistogram {
        let total = self.total();
        let mass = self
            .counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        PositionHistogram {
            bins: self.counts.len(),
            mass,
        }
    }
}

/// Normalized source positions of matched n-gram windows over a collection
/// of (document, summary) pairs.
pub fn overlap_position_histogram<'a, I>(pairs: I, n: usize, bins: usize, stat: PositionStat) -> Result<PositionHistogram>
where
    I: IntoIterator<Item = (&'a TokenSeq, &'a TokenSeq)>,
{
    let mut acc = HistogramAccumulator::new(n, bins, stat)?;
    for (doc, sum) in pairs {
        acc.add_pair(doc.tokens(), sum.tokens());
    }
    Ok(acc.finish())
}
