//! Extractiveness, copying and faithfulness metrics.

mod corpus;
mod entity;
mod extractive;
mod overlap;
mod rouge;

pub use corpus::{CorpusStats, DatasetReport, StatsOptions};
pub use entity::{
    entity_prf, CapitalizedRunRecognizer, EntityRecognizer, EntitySet,
};
pub use extractive::{
    copy_length, copy_length_by, efd, efd_by, efd_with, extractiveness, gsg_score, gsg_scores,
    ngram_novelty, ngram_novelty_by, EfdNorm, ExtractivenessReport,
};
pub use overlap::{
    copied_ngram_f1, copied_ngram_f1_by, overlap_position_histogram, HistogramAccumulator,
    PositionHistogram, PositionStat,
};
pub use rouge::{rouge_f1, rouge_tokens, RougeScore, RougeVariant};

use serde::{Deserialize, Serialize};

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// `hits / predicted` and `hits / gold`, with 0 for empty denominators.
    pub fn from_counts(hits: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { hits as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { hits as f64 / gold as f64 };
        Self::new(precision, recall)
    }

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}
