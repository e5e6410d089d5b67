//! Self-supervised pseudo document/summary pairs built from raw passages:
//! importance-ranked sentence selection over whole passages (`nat`) and over
//! fixed-size sentence chunks (`chunk`), a minimum-density filter, and a
//! lead-sentence variant (`lead`).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{efd_by, gsg_scores, EfdNorm};
use crate::par;
use crate::record::{parse_lines, LineError};
use crate::textcore::{tokenize, SentenceSpan, SentenceSplitter, TokenSeq};

/// A raw passage with its sentence segmentation.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub genre: Option<String>,
    pub tokens: TokenSeq,
    pub sentences: Vec<SentenceSpan>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, genre: Option<String>, splitter: &SentenceSplitter, fold_case: bool) -> Self {
        let text = text.into();
        let tokens = tokenize(&text, fold_case);
        let sentences = splitter.split_tokens(&tokens);
        Document {
            id: id.into(),
            text,
            genre,
            tokens,
            sentences,
        }
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    fn piece_start(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else if k >= self.sentences.len() {
            self.text.len()
        } else {
            self.tokens.offsets()[self.sentences[k].start_token].0
        }
    }

    /// Verbatim text of sentence `k` including the whitespace that follows
    /// it; the pieces concatenate back to `text`.
    pub fn piece(&self, k: usize) -> &str {
        &self.text[self.piece_start(k)..self.piece_start(k + 1)]
    }

    /// Consecutive sentences `range` as a standalone document.
    fn sub_document(&self, id: String, start: usize, end: usize) -> Document {
        let text = self.text[self.piece_start(start)..self.piece_start(end)].to_string();
        let tokens = tokenize(&text, self.tokens.is_folded());
        let shift = self.sentences[start].start_token;
        let sentences = self.sentences[start..end]
            .iter()
            .map(|s| SentenceSpan {
                start_token: s.start_token - shift,
                end_token: s.end_token - shift,
            })
            .collect();
        Document {
            id,
            text,
            genre: self.genre.clone(),
            tokens,
            sentences,
        }
    }

    fn sentence_tokens(&self, idx: impl Iterator<Item = usize>) -> Vec<&String> {
        let toks = self.tokens.tokens();
        idx.flat_map(|k| &toks[self.sentences[k].start_token..self.sentences[k].end_token])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Nat,
    Chunk,
    Lead,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Nat => "nat",
            Provenance::Chunk => "chunk",
            Provenance::Lead => "lead",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nat" => Ok(Provenance::Nat),
            "chunk" => Ok(Provenance::Chunk),
            "lead" => Ok(Provenance::Lead),
            other => Err(format!("unknown mode `{other}` (expected nat, chunk or lead)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub id: String,
    pub document_text: String,
    pub summary_text: String,
    pub provenance: Provenance,
    pub efd: f64,
    pub selected_indices: Vec<usize>,
}

/// Which side receives the selected sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Selected sentences become the document, the rest the summary.
    #[default]
    Literal,
    /// Selected sentences become the summary, as in gap-sentence generation.
    Gsg,
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Orientation::Literal),
            "gsg" => Ok(Orientation::Gsg),
            other => Err(format!("unknown orientation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub select_ratio: f64,
    pub max_sents: usize,
    pub min_sents: usize,
    pub min_efd: f64,
    pub lead_k: usize,
    pub orientation: Orientation,
    pub modes: Vec<Provenance>,
    pub fold_case: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            select_ratio: 0.25,
            max_sents: 8,
            min_sents: 4,
            min_efd: 3.0,
            lead_k: 3,
            orientation: Orientation::Literal,
            modes: vec![Provenance::Nat, Provenance::Chunk],
            fold_case: true,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.select_ratio > 0.0 && self.select_ratio < 1.0) {
            return bad(format!("select ratio must lie in (0, 1), got {}", self.select_ratio));
        }
        if self.min_sents == 0 || self.min_sents > self.max_sents {
            return bad(format!(
                "need 1 <= min_sents <= max_sents, got {} and {}",
                self.min_sents, self.max_sents
            ));
        }
        if !(self.min_efd >= 0.0) {
            return bad(format!("min_efd must be >= 0, got {}", self.min_efd));
        }
        if self.lead_k == 0 {
            return bad("lead_k must be >= 1".into());
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        Ok(())
    }

    /// `max(1, round_half_up(ratio * sentences))`.
    pub fn selection_count(&self, sentences: usize) -> usize {
        ((self.select_ratio * sentences as f64 + 0.5 + 1e-9).floor() as usize).max(1)
    }

    fn has(&self, mode: Provenance) -> bool {
        self.modes.contains(&mode)
    }
}

/// Why a builder produced nothing for a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Skip {
    TooFewSentences,
    EmptySide,
    BelowChunkFloor,
}

impl Skip {
    pub fn name(self) -> &'static str {
        match self {
            Skip::TooFewSentences => "too_few_sentences",
            Skip::EmptySide => "empty_side",
            Skip::BelowChunkFloor => "below_chunk_floor",
        }
    }
}

fn make_pair(doc: &Document, id: String, provenance: Provenance, selected: Vec<usize>, selected_is_document: bool) -> PseudoPair {
    let s = doc.sentence_count();
    let mut is_sel = vec![false; s];
    for &k in &selected {
        is_sel[k] = true;
    }
    let side = |want: bool| -> (String, Vec<&String>) {
        let idx: Vec<usize> = (0..s).filter(|&k| is_sel[k] == want).collect();
        let text: String = idx.iter().map(|&k| doc.piece(k)).collect();
        (text, doc.sentence_tokens(idx.into_iter()))
    };
    let (sel_text, sel_toks) = side(true);
    let (rest_text, rest_toks) = side(false);
    let (document_text, summary_text, x, y) = if selected_is_document {
        (sel_text, rest_text, sel_toks, rest_toks)
    } else {
        (rest_text, sel_text, rest_toks, sel_toks)
    };
    let efd = efd_by(&x, &y, EfdNorm::Source).unwrap_or(0.0);
    PseudoPair {
        id,
        document_text,
        summary_text,
        provenance,
        efd,
        selected_indices: selected,
    }
}

fn select_nat(doc: &Document, cfg: &BuildConfig, id: String, provenance: Provenance) -> std::result::Result<PseudoPair, Skip> {
    let s = doc.sentence_count();
    if s < 2 {
        return Err(Skip::TooFewSentences);
    }
    let k = cfg.selection_count(s);
    if k >= s {
        return Err(Skip::EmptySide);
    }
    let scores = gsg_scores(&doc.tokens, &doc.sentences).map_err(|_| Skip::TooFewSentences)?;
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..k].to_vec();
    selected.sort_unstable();
    Ok(make_pair(doc, id, provenance, selected, cfg.orientation == Orientation::Literal))
}

/// Ranks sentences by their density against the rest of the passage and
/// moves the top `selection_count` of them to one side.
pub fn build_nat(doc: &Document, cfg: &BuildConfig) -> std::result::Result<PseudoPair, Skip> {
    select_nat(doc, cfg, format!("{}#nat", doc.id), Provenance::Nat)
}

/// Consecutive non-overlapping chunks of `max_sents` sentences; a final
/// chunk shorter than `min_sents` is discarded. Each chunk is then treated
/// like a whole passage.
pub fn build_chunk(doc: &Document, cfg: &BuildConfig) -> (Vec<PseudoPair>, Vec<Skip>) {
    let mut out = Vec::new();
    let mut skips = Vec::new();
    let s = doc.sentence_count();
    let mut start = 0;
    let mut k = 0;
    while start < s {
        let end = (start + cfg.max_sents).min(s);
        if end - start < cfg.min_sents {
            skips.push(Skip::BelowChunkFloor);
        } else {
            let chunk = doc.sub_document(doc.id.clone(), start, end);
            match select_nat(&chunk, cfg, format!("{}#chunk{k}", doc.id), Provenance::Chunk) {
                Ok(p) => out.push(p),
                Err(e) => skips.push(e),
            }
        }
        start = end;
        k += 1;
    }
    (out, skips)
}

/// First `lead_k` sentences as the summary, the rest as the document.
pub fn build_lead(doc: &Document, cfg: &BuildConfig) -> std::result::Result<PseudoPair, Skip> {
    if doc.sentence_count() <= cfg.lead_k {
        return Err(Skip::EmptySide);
    }
    Ok(make_pair(doc, format!("{}#lead", doc.id), Provenance::Lead, (0..cfg.lead_k).collect(), false))
}

/// Keeps pairs whose density reaches `min_efd`, in order; returns the
/// number dropped.
pub fn filter_min_efd(pairs: Vec<PseudoPair>, min_efd: f64) -> (Vec<PseudoPair>, usize) {
    let before = pairs.len();
    let kept: Vec<PseudoPair> = pairs.into_iter().filter(|p| p.efd >= min_efd).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Counts per mode and drop reasons for one build run. Merging is plain
/// addition, so per-document manifests combine in any order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Manifest {
    pub documents: usize,
    pub emitted: BTreeMap<Provenance, usize>,
    pub built: BTreeMap<Provenance, usize>,
    pub dropped_min_efd: usize,
    pub skipped: BTreeMap<String, usize>,
    pub failures: Vec<LineError>,
}

impl Manifest {
    pub fn merge(&mut self, other: &Manifest) {
        self.documents += other.documents;
        for (k, v) in &other.emitted {
            *self.emitted.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.built {
            *self.built.entry(*k).or_insert(0) += v;
        }
        self.dropped_min_efd += other.dropped_min_efd;
        for (k, v) in &other.skipped {
            *self.skipped.entry(k.clone()).or_insert(0) += v;
        }
        self.failures.extend(other.failures.iter().cloned());
    }

    fn skip(&mut self, mode: Provenance, why: Skip) {
        *self.skipped.entry(format!("{mode}:{}", why.name())).or_insert(0) += 1;
    }

    pub fn total_emitted(&self) -> usize {
        self.emitted.values().sum()
    }
}

/// All enabled builders on one document: nat then chunk outputs go through
/// the density filter, lead outputs are appended unfiltered.
pub fn build_document(doc: &Document, cfg: &BuildConfig) -> (Vec<PseudoPair>, Manifest) {
    let mut m = Manifest {
        documents: 1,
        ..Manifest::default()
    };
    let mut union = Vec::new();
    if cfg.has(Provenance::Nat) {
        match build_nat(doc, cfg) {
            Ok(p) => union.push(p),
            Err(e) => m.skip(Provenance::Nat, e),
        }
    }
    if cfg.has(Provenance::Chunk) {
        let (pairs, skips) = build_chunk(doc, cfg);
        union.extend(pairs);
        for s in skips {
            m.skip(Provenance::Chunk, s);
        }
    }
    for p in &union {
        *m.built.entry(p.provenance).or_insert(0) += 1;
    }
    let (mut out, dropped) = filter_min_efd(union, cfg.min_efd);
    m.dropped_min_efd = dropped;
    if cfg.has(Provenance::Lead) {
        match build_lead(doc, cfg) {
            Ok(p) => {
                *m.built.entry(Provenance::Lead).or_insert(0) += 1;
                out.push(p);
            }
            Err(e) => m.skip(Provenance::Lead, e),
        }
    }
    for p in &out {
        *m.emitted.entry(p.provenance).or_insert(0) += 1;
    }
    (out, m)
}

/// Builds every document in order; parallel over documents.
pub fn build_corpus(docs: &[Document], cfg: &BuildConfig) -> Result<(Vec<PseudoPair>, Manifest)> {
    cfg.validate()?;
    let results = par::map_ordered(docs, |d| build_document(d, cfg));
    let mut manifest = Manifest::default();
    let mut pairs = Vec::new();
    for (p, m) in results {
        pairs.extend(p);
        manifest.merge(&m);
    }
    Ok((pairs, manifest))
}

/// One line of JSONL input.
#[derive(Debug, Clone, Deserialize)]
pub struct DocumentInput {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub genre: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Jsonl,
    /// Passages separated by blank lines; ids are `p{index}`.
    Text,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "text" => Ok(InputFormat::Text),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

/// Streams documents from `input`, writes pairs as JSONL to `output` and
/// returns the manifest. Documents are processed in blocks of `block`.
pub fn build_stream<R: BufRead, W: Write>(
    input: R,
    format: InputFormat,
    mut output: W,
    cfg: &BuildConfig,
    splitter: &SentenceSplitter,
    block: usize,
) -> Result<Manifest> {
    cfg.validate()?;
    let block = block.max(1);
    let mut manifest = Manifest::default();
    let mut pending: Vec<(usize, String)> = Vec::new();
    let mut passage = String::new();
    let mut passages = 0usize;

    let mut flush = |pending: &mut Vec<(usize, String)>, manifest: &mut Manifest| -> Result<()> {
        let docs: Vec<Document> = match format {
            InputFormat::Jsonl => {
                let (ok, bad) = parse_lines::<DocumentInput>(pending);
                manifest.failures.extend(bad);
                ok.into_iter()
                    .map(|(_, d)| Document::new(d.id, d.text, d.genre, splitter, cfg.fold_case))
                    .collect()
            }
            InputFormat::Text => pending
                .drain(..)
                .map(|(i, t)| Document::new(format!("p{i}"), t, None, splitter, cfg.fold_case))
                .collect(),
        };
        pending.clear();
        let (pairs, m) = build_corpus(&docs, cfg)?;
        manifest.merge(&m);
        for p in pairs {
            serde_json::to_writer(&mut output, &p)?;
            output.write_all(b"\n")?;
        }
        Ok(())
    };

    for (i, line) in input.lines().enumerate() {
        let line = line?;
        match format {
            InputFormat::Jsonl => pending.push((i + 1, line)),
            InputFormat::Text => {
                if line.trim().is_empty() {
                    if !passage.trim().is_empty() {
                        pending.push((passages, std::mem::take(&mut passage)));
                        passages += 1;
                    }
                    passage.clear();
                } else {
                    if !passage.is_empty() {
                        passage.push('\n');
                    }
                    passage.push_str(&line);
                }
            }
        }
        if pending.len() >= block {
            flush(&mut pending, &mut manifest)?;
        }
    }
    if format == InputFormat::Text && !passage.trim().is_empty() {
        pending.push((passages, passage));
    }
    flush(&mut pending, &mut manifest)?;
    output.flush()?;
    Ok(manifest)
}
