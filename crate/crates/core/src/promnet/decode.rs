use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::config::{BOS, EOS, FIRST_TOKEN};
use super::model::{CopyIndicator, EncoderStates, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Generated tokens, including the end symbol when one was emitted.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Decoded {
    /// Log-probability per generated token.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens with the end symbol removed.
    pub fn content(&self) -> &[u32] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

fn candidates(vocab: usize) -> impl Iterator<Item = u32> {
    std::iter::once(EOS).chain(FIRST_TOKEN..vocab as u32)
}

struct Ctx<'a> {
    model: &'a Model,
    enc: EncoderStates,
    ind: CopyIndicator,
    max_len: usize,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a Model, src: &[u32], max_len: usize) -> Result<Self> {
        let enc = model.encode(src)?;
        let ind = model.indicator(&enc);
        Ok(Ctx {
            model,
            enc,
            ind,
            max_len: max_len.min(model.config.max_tgt_len),
        })
    }

    fn log_probs(&self, generated: &[u32]) -> Result<Vec<f64>> {
        let mut prefix = Vec::with_capacity(generated.len() + 1);
        prefix.push(BOS);
        prefix.extend_from_slice(generated);
        let tr = self.model.decode_step(&self.enc, &self.ind, &prefix)?;
        Ok(tr.p_tilde.iter().map(|p| p.ln()).collect())
    }
}

/// Argmax decoding; ties go to the lower token id.
pub fn greedy_decode(model: &Model, src: &[u32], max_len: usize) -> Result<Decoded> {
    let ctx = Ctx::new(model, src, max_len)?;
    let mut out = Decoded {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    while out.tokens.len() < ctx.max_len {
        let lp = ctx.log_probs(&out.tokens)?;
        let mut best = EOS;
        for tok in candidates(model.config.vocab_size) {
            if lp[tok as usize] > lp[best as usize]
                || (lp[tok as usize] == lp[best as usize] && tok < best)
            {
                best = tok;
            }
        }
        out.log_prob += lp[best as usize];
        out.tokens.push(best);
        if best == EOS {
            out.finished = true;
            break;
        }
    }
    Ok(out)
}

/// Beam search over cumulative log-probability. Stops once `beam_size`
/// hypotheses have ended or `max_len` tokens were generated, then returns
/// the hypothesis with the best per-token score.
pub fn beam_decode(model: &Model, src: &[u32], beam_size: usize, max_len: usize) -> Result<Decoded> {
    if beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    let ctx = Ctx::new(model, src, max_len)?;
    let mut live = vec![Decoded {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut done: Vec<Decoded> = Vec::new();
    for _ in 0..ctx.max_len {
        let mut cands: Vec<(f64, u32, usize)> = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let lp = ctx.log_probs(&h.tokens)?;
            for tok in candidates(model.config.vocab_size) {
                cands.push((h.log_prob + lp[tok as usize], tok, hi));
            }
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::with_capacity(beam_size);
        for &(lp, tok, hi) in cands.iter().take(beam_size) {
            let mut tokens = live[hi].tokens.clone();
            tokens.push(tok);
            let h = Decoded {
                tokens,
                log_prob: lp,
                finished: tok == EOS,
            };
            if h.finished {
                done.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
        if done.len() >= beam_size || live.is_empty() {
            break;
        }
    }
    if done.len() < beam_size {
        done.extend(live);
    }
    let mut best = 0;
    for i in 1..done.len() {
        if done[i].score().total_cmp(&done[best].score()) == Ordering::Greater {
            best = i;
        }
    }
    Ok(done.swap_remove(best))
}

/// Mean per-example copied-n-gram F1 of beam-decoded outputs against the
/// gold targets, in `[0, 1]`.
pub fn copied_f1_on(model: &Model, examples: &[super::model::Example], beam_size: usize, n: usize) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let max_len = model.config.max_tgt_len;
    let scores = crate::par::map_ordered(examples, |ex| -> Result<f64> {
        let out = beam_decode(model, &ex.src, beam_size, max_len)?;
        let gold = match ex.tgt.last() {
            Some(&EOS) => &ex.tgt[..ex.tgt.len() - 1],
            _ => &ex.tgt[..],
        };
        Ok(crate::metrics::copied_ngram_f1_by(&ex.src, gold, out.content(), n)?.f1)
    });
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / examples.len() as f64)
}
