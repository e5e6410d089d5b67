use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::extractive::{extractiveness, EfdNorm, ExtractivenessReport};
use super::overlap::{HistogramAccumulator, PositionHistogram, PositionStat};
use crate::error::Result;
use crate::par;
use crate::record::Record;
use crate::textcore::tokenize;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsOptions {
    pub histogram_n: usize,
    pub bins: usize,
    pub position: PositionStat,
    pub novelty_orders: Vec<usize>,
    pub norm: EfdNorm,
    pub fold_case: bool,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            histogram_n: 2,
            bins: 20,
            position: PositionStat::Start,
            novelty_orders: vec![1, 2, 3, 4],
            norm: EfdNorm::Source,
            fold_case: true,
        }
    }
}

/// Running sums for one dataset. `merge` is associative and commutative on
/// the integer parts; float sums are combined in input order by
/// [`CorpusStats::from_records`] so results do not depend on thread count.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    pairs: usize,
    skipped: usize,
    efd_sum: f64,
    copy_len_sum: f64,
    novelty: BTreeMap<usize, (f64, usize)>,
    hist: HistogramAccumulator,
}

struct PairStats {
    report: Option<ExtractivenessReport>,
    hist: HistogramAccumulator,
}

impl CorpusStats {
    pub fn new(opts: &StatsOptions) -> Result<Self> {
        Ok(CorpusStats {
            pairs: 0,
            skipped: 0,
            efd_sum: 0.0,
            copy_len_sum: 0.0,
            novelty: BTreeMap::new(),
            hist: HistogramAccumulator::new(opts.histogram_n, opts.bins, opts.position)?,
        })
    }

    pub fn add(&mut self, report: &ExtractivenessReport) {
        self.pairs += 1;
        self.efd_sum += report.efd;
        self.copy_len_sum += report.copy_length;
        for (&n, &v) in &report.novelty {
            let e = self.novelty.entry(n).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.pairs += other.pairs;
        self.skipped += other.skipped;
        self.efd_sum += other.efd_sum;
        self.copy_len_sum += other.copy_len_sum;
        for (&n, &(s, c)) in &other.novelty {
            let e = self.novelty.entry(n).or_insert((0.0, 0));
            e.0 += s;
            e.1 += c;
        }
        self.hist.merge(&other.hist);
    }

    pub fn from_records(records: &[Record], opts: &StatsOptions) -> Result<CorpusStats> {
        let empty = HistogramAccumulator::new(opts.histogram_n, opts.bins, opts.position)?;
        let per_pair = par::map_ordered(records, |r| {
            let x = tokenize(&r.document, opts.fold_case);
            let y = tokenize(&r.summary, opts.fold_case);
            let mut hist = empty.clone();
            hist.add_pair(x.tokens(), y.tokens());
            PairStats {
                report: extractiveness(&x, &y, &opts.novelty_orders, opts.norm).ok(),
                hist,
            }
        });
        let mut stats = CorpusStats::new(opts)?;
        for p in per_pair {
            match &p.report {
                Some(r) => stats.add(r),
                None => stats.skipped += 1,
            }
            stats.hist.merge(&p.hist);
        }
        Ok(stats)
    }

    pub fn report(&self, dataset: &str) -> DatasetReport {
        let mean = |s: f64| if self.pairs == 0 { 0.0 } else { s / self.pairs as f64 };
        DatasetReport {
            dataset: dataset.to_string(),
            pairs: self.pairs,
            skipped: self.skipped,
            efd: mean(self.efd_sum),
            copy_length: mean(self.copy_len_sum),
            novelty: self
                .novelty
                .iter()
                .map(|(&n, &(s, c))| (n, s / c as f64))
                .collect(),
            histogram: self.hist.finish(),
        }
    }
}

/// Corpus means of the extractiveness metrics plus the overlap position
/// histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub pairs: usize,
    pub skipped: usize,
    pub efd: f64,
    pub copy_length: f64,
    pub novelty: BTreeMap<usize, f64>,
    pub histogram: PositionHistogram,
}

impl DatasetReport {
    /// Flat `(dataset, metric, value)` rows for CSV output.
    pub fn csv_rows(&self) -> Vec<(String, String, f64)> {
        let mut rows = vec![
            (self.dataset.clone(), "pairs".to_string(), self.pairs as f64),
            (self.dataset.clone(), "efd".to_string(), self.efd),
            (self.dataset.clone(), "copy_length".to_string(), self.copy_length),
        ];
        for (n, v) in &self.novelty {
            rows.push((self.dataset.clone(), format!("novelty_{n}"), *v));
        }
        for (b, m) in self.histogram.mass.iter().enumerate() {
            rows.push((self.dataset.clone(), format!("position_bin_{b:02}"), *m));
        }
        rows
    }
}
