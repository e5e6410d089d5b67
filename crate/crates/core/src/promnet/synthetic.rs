//! A toy summarization task that rewards copying.
//!
//! Sources interleave filler tokens with one to three phrases drawn from a
//! bank of rare tokens. Targets wrap the phrases, in source order, in a fixed
//! template. Filler tokens never appear in targets and template tokens never
//! appear in sources, so every copied n-gram comes from a phrase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EOS, FIRST_TOKEN};
use super::model::Example;
use crate::copylabel::label_copy_by;
use crate::error::{Error, Result};

pub const MAX_PHRASES: usize = 3;
pub const PHRASE_LEN: (usize, usize) = (2, 4);
pub const FILLER_RUN: (usize, usize) = (1, 3);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub vocab_size: usize,
    pub phrase_bank_size: usize,
    /// Copy-label order used for the masks.
    pub n: usize,
}

impl SyntheticTask {
    pub fn new(vocab_size: usize, phrase_bank_size: usize) -> Result<Self> {
        let t = SyntheticTask {
            vocab_size,
            phrase_bank_size,
            n: 2,
        };
        if phrase_bank_size == 0 || t.filler_ids().is_empty() {
            return Err(Error::Config(format!(
                "vocab {vocab_size} leaves no room for {phrase_bank_size} phrase tokens plus fillers and template tokens"
            )));
        }
        Ok(t)
    }

    /// Template ids; one before each phrase.
    pub fn template_ids(&self) -> std::ops::Range<u32> {
        FIRST_TOKEN..FIRST_TOKEN + MAX_PHRASES as u32
    }

    pub fn filler_ids(&self) -> std::ops::Range<u32> {
        let start = FIRST_TOKEN + MAX_PHRASES as u32;
        let end = self.vocab_size.saturating_sub(self.phrase_bank_size) as u32;
        start..end.max(start)
    }

    pub fn bank_ids(&self) -> std::ops::Range<u32> {
        (self.vocab_size - self.phrase_bank_size) as u32..self.vocab_size as u32
    }

    /// Longest possible source and target, end symbol included.
    pub fn max_lengths(&self) -> (usize, usize) {
        let src = MAX_PHRASES * PHRASE_LEN.1 + (MAX_PHRASES + 1) * FILLER_RUN.1;
        let tgt = MAX_PHRASES * (PHRASE_LEN.1 + 1) + 1;
        (src, tgt)
    }

    /// Builds one example from explicit phrases and filler runs. `fillers`
    /// has one more run than there are phrases.
    pub fn assemble(&self, phrases: &[Vec<u32>], fillers: &[Vec<u32>]) -> Result<Example> {
        assert_eq!(fillers.len(), phrases.len() + 1, "one filler run around each phrase");
        let mut src = Vec::new();
        let mut tgt = Vec::new();
        for (k, p) in phrases.iter().enumerate() {
            src.extend_from_slice(&fillers[k]);
            src.extend_from_slice(p);
            tgt.push(FIRST_TOKEN + k as u32);
            tgt.extend_from_slice(p);
        }
        src.extend_from_slice(&fillers[phrases.len()]);
        tgt.push(EOS);
        let copy_mask = label_copy_by(&src, &tgt, self.n)?;
        Ok(Example { src, tgt, copy_mask })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Example> {
        let k = rng.random_range(1..=MAX_PHRASES);
        let bank = self.bank_ids();
        let filler = self.filler_ids();
        let phrases: Vec<Vec<u32>> = (0..k)
            .map(|_| {
                let len = rng.random_range(PHRASE_LEN.0..=PHRASE_LEN.1);
                (0..len).map(|_| rng.random_range(bank.clone())).collect()
            })
            .collect();
        let fillers: Vec<Vec<u32>> = (0..=k)
            .map(|_| {
                let len = rng.random_range(FILLER_RUN.0..=FILLER_RUN.1);
                (0..len).map(|_| rng.random_range(filler.clone())).collect()
            })
            .collect();
        self.assemble(&phrases, &fillers)
    }

    pub fn generate(&self, sample_count: usize, seed: u64) -> Result<Vec<Example>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..sample_count).map(|_| self.sample(&mut rng)).collect()
    }
}

pub fn make_synthetic_task(
    vocab_size: usize,
    phrase_bank_size: usize,
    sample_count: usize,
    seed: u64,
) -> Result<Vec<Example>> {
    SyntheticTask::new(vocab_size, phrase_bank_size)?.generate(sample_count, seed)
}
