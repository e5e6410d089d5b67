//! Encoder-decoder forward pass with the indicator-guided copy mixture.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, BOS, PAD};
use super::params::{frozen_names, init_model, Params};
use super::tape::{Mask, NodeId, Tape};
use super::tensor::Mat;
use crate::copylabel::CopyLabelMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    /// One row per source position.
    pub h_en: Mat,
    pub src_tokens: Vec<u32>,
    /// `true` for positions that take part in attention and the copy loss.
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopyIndicator {
    pub logits: Vec<f64>,
    pub h_c: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Everything computed for one decoding position.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub h_de: Vec<f64>,
    /// Cross-attention of the final decoder layer, averaged over heads.
    pub a: Vec<f64>,
    /// Indicator-fused scores before normalization.
    pub a_c: Vec<f64>,
    /// `a_c` normalized over source positions.
    pub copy_positions: Vec<f64>,
    pub p_vocab: Vec<f64>,
    pub p_copy_tilde: Vec<f64>,
    pub p_gen: f64,
    pub p_copy: f64,
    pub p_tilde: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_summ: f64,
    pub loss_copy: f64,
    pub loss_total: f64,
    pub token_count: usize,
}

/// One training triple. `tgt` ends with the end symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub copy_mask: CopyLabelMask,
}

/// Which loss the backward pass starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Total,
    CopyOnly,
}

struct Net<'a> {
    cfg: &'a ModelConfig,
    params: &'a Params,
    tape: Tape,
    bound: BTreeMap<String, NodeId>,
    trainable: bool,
    frozen: Vec<&'static str>,
}

struct Heads {
    h_de: NodeId,
    a: NodeId,
    fused: NodeId,
    q: NodeId,
    p_vocab: NodeId,
    p_copy: NodeId,
    p_gen: NodeId,
    p_tilde: NodeId,
}

impl<'a> Net<'a> {
    fn new(cfg: &'a ModelConfig, params: &'a Params, trainable: bool) -> Self {
        Net {
            cfg,
            params,
            tape: Tape::new(),
            bound: BTreeMap::new(),
            trainable,
            frozen: frozen_names(cfg),
        }
    }

    fn p(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.bound.get(name) {
            return id;
        }
        let m = self.params.arrays.get(name).unwrap_or_else(|| panic!("parameter `{name}` missing"));
        let train = self.trainable && !self.frozen.contains(&name);
        let id = self.tape.leaf(m.clone(), train);
        self.bound.insert(name.to_string(), id);
        id
    }

    fn linear(&mut self, x: NodeId, w: &str, b: &str) -> NodeId {
        let w = self.p(w);
        let b = self.p(b);
        let y = self.tape.matmul(x, w);
        self.tape.add_bias(y, b)
    }

    fn norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let g = self.p(&format!("{prefix}.g"));
        let b = self.p(&format!("{prefix}.b"));
        self.tape.layer_norm(x, g, b)
    }

    fn feed_forward(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let h = self.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"));
        let h = self.tape.gelu(h);
        self.linear(h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
    }

    /// Multi-head attention; also returns the head-averaged weights.
    fn attention(&mut self, prefix: &str, q_in: NodeId, kv_in: NodeId, mask: &Mask) -> (NodeId, NodeId) {
        let q = self.linear(q_in, &format!("{prefix}.wq"), &format!("{prefix}.bq"));
        let k = self.linear(kv_in, &format!("{prefix}.wk"), &format!("{prefix}.bk"));
        let v = self.linear(kv_in, &format!("{prefix}.wv"), &format!("{prefix}.bv"));
        let heads = self.cfg.head_count;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice_cols(q, h * hd, hd),
                    self.tape.slice_cols(k, h * hd, hd),
                    self.tape.slice_cols(v, h * hd, hd),
                )
            };
            let s = self.tape.matmul_bt(qh, kh);
            let s = self.tape.scale(s, scale);
            let w = self.tape.softmax(s, mask);
            outs.push(self.tape.matmul(w, vh));
            weights.push(w);
        }
        let cat = if heads == 1 { outs[0] } else { self.tape.concat_cols(&outs) };
        let out = self.linear(cat, &format!("{prefix}.wo"), &format!("{prefix}.bo"));
        let mut avg = weights[0];
        if heads > 1 {
            for &w in &weights[1..] {
                avg = self.tape.add(avg, w);
            }
            avg = self.tape.scale(avg, 1.0 / heads as f64);
        }
        (out, avg)
    }

    fn embed(&mut self, tokens: &[u32], pos_table: &str) -> NodeId {
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let te = self.p("tok_emb");
        let pe = self.p(pos_table);
        let e = self.tape.gather(te, &ids);
        let p = self.tape.gather(pe, &positions);
        self.tape.add(e, p)
    }

    fn encoder(&mut self, src: &[u32], valid: &[bool]) -> NodeId {
        let mask = Mask {
            causal: false,
            keys: Some(valid.to_vec()),
        };
        let mut x = self.embed(src, "pos_src");
        for l in 0..self.cfg.encoder_layers {
            let (a, _) = self.attention(&format!("enc.{l}.self"), x, x, &mask);
            let r = self.tape.add(x, a);
            x = self.norm(r, &format!("enc.{l}.ln1"));
            let f = self.feed_forward(x, &format!("enc.{l}.ff"));
            let r = self.tape.add(x, f);
            x = self.norm(r, &format!("enc.{l}.ln2"));
        }
        x
    }

    /// Indicator logits and probabilities, both `S x 1`.
    fn indicator(&mut self, h_en: NodeId) -> (NodeId, NodeId) {
        let z = self.linear(h_en, "ind.w", "ind.b");
        let h_c = self.tape.sigmoid(z);
        (z, h_c)
    }

    fn decoder(&mut self, h_en: NodeId, valid: &[bool], tgt_in: &[u32]) -> (NodeId, NodeId) {
        let self_mask = Mask {
            causal: true,
            keys: None,
        };
        let cross_mask = Mask {
            causal: false,
            keys: Some(valid.to_vec()),
        };
        let mut x = self.embed(tgt_in, "pos_tgt");
        let mut cross = None;
        for l in 0..self.cfg.decoder_layers {
            let (a, _) = self.attention(&format!("dec.{l}.self"), x, x, &self_mask);
            let r = self.tape.add(x, a);
            x = self.norm(r, &format!("dec.{l}.ln1"));
            let (c, w) = self.attention(&format!("dec.{l}.cross"), x, h_en, &cross_mask);
            cross = Some(w);
            let r = self.tape.add(x, c);
            x = self.norm(r, &format!("dec.{l}.ln2"));
            let f = self.feed_forward(x, &format!("dec.{l}.ff"));
            let r = self.tape.add(x, f);
            x = self.norm(r, &format!("dec.{l}.ln3"));
        }
        (x, cross.expect("at least one decoder layer"))
    }

    fn heads(&mut self, h_en: NodeId, h_c: NodeId, src: &[u32], valid: &[bool], tgt_in: &[u32]) -> Heads {
        let (h_de, a) = self.decoder(h_en, valid, tgt_in);
        let t = tgt_in.len();
        let logits = self.linear(h_de, "lm.w", "lm.b");
        let p_vocab = self.tape.softmax(logits, &Mask::default());

        let fw = self.p("fuse.w");
        let fb = self.p("fuse.b");
        let f = self.tape.affine_scalar(h_c, fw, fb);
        let gate = self.tape.sigmoid(f);
        let gate = self.tape.transpose(gate);
        let gate = self.tape.broadcast_rows(gate, t);
        let fused = self.tape.mul(a, gate);
        let q = self.tape.row_normalize(fused);
        let mut onehot = Mat::zeros(src.len(), self.cfg.vocab_size);
        for (i, &tok) in src.iter().enumerate() {
            if valid[i] {
                *onehot.at_mut(i, tok as usize) = 1.0;
            }
        }
        let onehot = self.tape.leaf(onehot, false);
        let p_copy = self.tape.matmul(q, onehot);

        let context = self.tape.matmul(a, h_en);
        let te = self.p("tok_emb");
        let ids: Vec<usize> = tgt_in.iter().map(|&x| x as usize).collect();
        let prev = self.tape.gather(te, &ids);
        let gin = self.tape.concat_cols(&[context, h_de, prev]);
        let g = self.linear(gin, "gate.w", "gate.b");
        let p_gen = self.tape.sigmoid(g);
        let p_tilde = self.tape.mix(p_gen, p_vocab, p_copy);
        Heads {
            h_de,
            a,
            fused,
            q,
            p_vocab,
            p_copy,
            p_gen,
            p_tilde,
        }
    }

    fn row(&self, id: NodeId, r: usize) -> Vec<f64> {
        self.tape.value(id).row(r).to_vec()
    }

    fn trace(&self, h: &Heads, r: usize) -> ForwardTrace {
        let p_gen = self.tape.value(h.p_gen).data[r];
        ForwardTrace {
            h_de: self.row(h.h_de, r),
            a: self.row(h.a, r),
            a_c: self.row(h.fused, r),
            copy_positions: self.row(h.q, r),
            p_vocab: self.row(h.p_vocab, r),
            p_copy_tilde: self.row(h.p_copy, r),
            p_gen,
            p_copy: 1.0 - p_gen,
            p_tilde: self.row(h.p_tilde, r),
        }
    }
}

/// Decoder input for a gold target: the start symbol followed by all but
/// the last gold token.
pub fn shift_right(tgt: &[u32]) -> Vec<u32> {
    let mut v = Vec::with_capacity(tgt.len());
    v.push(BOS);
    v.extend_from_slice(&tgt[..tgt.len().saturating_sub(1)]);
    v
}

fn check_ids(tokens: &[u32], vocab: usize) -> Result<()> {
    for (position, &id) in tokens.iter().enumerate() {
        if id as usize >= vocab {
            return Err(Error::OutOfVocab { id, position, vocab });
        }
    }
    Ok(())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Model {
    pub fn init(config: ModelConfig) -> Result<Model> {
        let params = init_model(&config)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Model> {
        config.validate()?;
        params.check_shapes(&config)?;
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(Model { config, params })
    }

    fn check_src(&self, src: &[u32], valid: &[bool]) -> Result<()> {
        if src.len() > self.config.max_src_len {
            return Err(Error::TooLong {
                len: src.len(),
                max: self.config.max_src_len,
            });
        }
        check_ids(src, self.config.vocab_size)?;
        if valid.len() != src.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries for {} source tokens",
                valid.len(),
                src.len()
            )));
        }
        if !valid.iter().any(|&v| v) {
            return Err(Error::EmptySource);
        }
        Ok(())
    }

    fn check_tgt(&self, tgt_in: &[u32]) -> Result<()> {
        if tgt_in.is_empty() {
            return Err(Error::Shape("decoder prefix is empty".into()));
        }
        if tgt_in.len() > self.config.max_tgt_len {
            return Err(Error::TooLong {
                len: tgt_in.len(),
                max: self.config.max_tgt_len,
            });
        }
        check_ids(tgt_in, self.config.vocab_size)
    }

    /// Encodes `src`, treating padding ids as masked.
    pub fn encode(&self, src: &[u32]) -> Result<EncoderStates> {
        let valid: Vec<bool> = src.iter().map(|&t| t != PAD).collect();
        self.encode_masked(src, &valid)
    }

    /// Encodes with an explicit attention mask over source positions.
    pub fn encode_masked(&self, src: &[u32], valid: &[bool]) -> Result<EncoderStates> {
        self.check_src(src, valid)?;
        let mut net = Net::new(&self.config, &self.params, false);
        let h = net.encoder(src, valid);
        Ok(EncoderStates {
            h_en: net.tape.value(h).clone(),
            src_tokens: src.to_vec(),
            valid: valid.to_vec(),
        })
    }

    pub fn indicator(&self, enc: &EncoderStates) -> CopyIndicator {
        let mut net = Net::new(&self.config, &self.params, false);
        let h = net.tape.leaf(enc.h_en.clone(), false);
        let (z, h_c) = net.indicator(h);
        CopyIndicator {
            logits: net.tape.value(z).data.clone(),
            h_c: net.tape.value(h_c).data.clone(),
            valid: enc.valid.clone(),
        }
    }

    /// Traces for every position of `tgt_in` given precomputed encoder states.
    pub fn decode_all(&self, enc: &EncoderStates, ind: &CopyIndicator, tgt_in: &[u32]) -> Result<Vec<ForwardTrace>> {
        self.check_tgt(tgt_in)?;
        let mut net = Net::new(&self.config, &self.params, false);
        let h_en = net.tape.leaf(enc.h_en.clone(), false);
        let h_c = net.tape.leaf(Mat::from_vec(ind.h_c.len(), 1, ind.h_c.clone()), false);
        let heads = net.heads(h_en, h_c, &enc.src_tokens, &enc.valid, tgt_in);
        Ok((0..tgt_in.len()).map(|r| net.trace(&heads, r)).collect())
    }

    /// Trace for the next token after `prefix`, which starts with the start
    /// symbol.
    pub fn decode_step(&self, enc: &EncoderStates, ind: &CopyIndicator, prefix: &[u32]) -> Result<ForwardTrace> {
        let mut all = self.decode_all(enc, ind, prefix)?;
        Ok(all.pop().expect("non-empty prefix"))
    }

    /// Loss and parameter gradients for one example.
    pub fn example_grad(&self, ex: &Example, objective: Objective) -> Result<(LossBreakdown, Params)> {
        let (loss, grads) = self.example_graph(ex, Some(objective))?;
        Ok((loss, grads.expect("gradients requested")))
    }

    pub fn example_loss(&self, ex: &Example) -> Result<LossBreakdown> {
        Ok(self.example_graph(ex, None)?.0)
    }

    fn example_graph(&self, ex: &Example, objective: Option<Objective>) -> Result<(LossBreakdown, Option<Params>)> {
        let valid: Vec<bool> = ex.src.iter().map(|&t| t != PAD).collect();
        self.check_src(&ex.src, &valid)?;
        if ex.tgt.is_empty() {
            return Err(Error::Shape("empty target".into()));
        }
        check_ids(&ex.tgt, self.config.vocab_size)?;
        if ex.copy_mask.labels.len() != ex.src.len() {
            return Err(Error::Shape(format!(
                "copy mask has {} labels for {} source tokens",
                ex.copy_mask.labels.len(),
                ex.src.len()
            )));
        }
        let tgt_in = shift_right(&ex.tgt);
        self.check_tgt(&tgt_in)?;

        let mut net = Net::new(&self.config, &self.params, objective.is_some());
        let h_en = net.encoder(&ex.src, &valid);
        let (z, h_c) = net.indicator(h_en);
        let heads = net.heads(h_en, h_c, &ex.src, &valid, &tgt_in);
        let targets: Vec<usize> = ex.tgt.iter().map(|&t| t as usize).collect();
        let summ = net.tape.nll_mean(heads.p_tilde, &targets);
        let labels: Vec<f64> = ex.copy_mask.labels.iter().map(|&c| c as f64).collect();
        let copy = net.tape.bce_logits_mean(z, &labels, &valid);
        let total = net.tape.axpy(summ, copy, self.config.lambda);
        let loss = LossBreakdown {
            loss_summ: net.tape.value(summ).data[0],
            loss_copy: net.tape.value(copy).data[0],
            loss_total: net.tape.value(total).data[0],
            token_count: ex.tgt.len(),
        };
        if !(loss.loss_total.is_finite() && loss.loss_copy.is_finite()) {
            return Err(Error::NonFinite("loss".into()));
        }
        let Some(objective) = objective else {
            return Ok((loss, None));
        };
        let root = match objective {
            Objective::Total => total,
            Objective::CopyOnly => copy,
        };
        let adj = net.tape.backward(root);
        let mut grads = self.params.zeros_like();
        for (name, id) in &net.bound {
            if let Some(g) = &adj[*id] {
                grads.arrays.get_mut(name).expect("bound names exist").add_assign(g);
            }
        }
        Ok((loss, Some(grads)))
    }
}

/// Mean negative log-likelihood of the gold tokens plus the weighted
/// indicator cross-entropy, recomputed from traces.
pub fn loss_total(
    traces: &[ForwardTrace],
    gold: &[u32],
    indicator: &CopyIndicator,
    copy_mask: &CopyLabelMask,
    lambda: f64,
) -> Result<LossBreakdown> {
    if traces.len() != gold.len() || gold.is_empty() {
        return Err(Error::Shape(format!("{} traces for {} gold tokens", traces.len(), gold.len())));
    }
    if copy_mask.labels.len() != indicator.h_c.len() {
        return Err(Error::Shape(format!(
            "copy mask has {} labels for {} source positions",
            copy_mask.labels.len(),
            indicator.h_c.len()
        )));
    }
    let mut summ = 0.0;
    for (t, (tr, &y)) in traces.iter().zip(gold).enumerate() {
        let p = *tr
            .p_tilde
            .get(y as usize)
            .ok_or(Error::OutOfVocab { id: y, position: t, vocab: tr.p_tilde.len() })?;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::NonFinite(format!("probability at step {t}")));
        }
        summ -= p.ln();
    }
    summ /= gold.len() as f64;
    let mut copy = 0.0;
    let mut count = 0usize;
    for ((&z, &c), &v) in indicator.logits.iter().zip(&copy_mask.labels).zip(&indicator.valid) {
        if v {
            copy += softplus(z) - c as f64 * z;
            count += 1;
        }
    }
    let copy = copy / count.max(1) as f64;
    let loss = LossBreakdown {
        loss_summ: summ,
        loss_copy: copy,
        loss_total: summ + lambda * copy,
        token_count: gold.len(),
    };
    if !loss.loss_total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(loss)
}
