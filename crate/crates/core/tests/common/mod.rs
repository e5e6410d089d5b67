//! Straightforward reference implementations used as test oracles. They
//! favour obviousness over speed and share no code with the library.
#![allow(dead_code)]

/// Position `i` is 1 iff some window starting in `i-n+1..=i` equals some
/// target window, found by comparing every pair of windows element-wise.
pub fn window_label_oracle<T: PartialEq>(src: &[T], tgt: &[T], n: usize) -> Vec<u8> {
    let mut out = vec![0u8; src.len()];
    if src.len() < n || tgt.len() < n {
        return out;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        'starts: for j in 0..n {
            if j > i || i - j + n > src.len() {
                continue;
            }
            let s = i - j;
            for t in 0..=tgt.len() - n {
                if (0..n).all(|k| src[s + k] == tgt[t + k]) {
                    *slot = 1;
                    break 'starts;
                }
            }
        }
    }
    out
}

/// `(src_start, tgt_start, length)` of a greedy scan over `y` that tries
/// every substring of `x` at each step, keeping the first longest.
pub fn fragment_oracle<T: PartialEq>(x: &[T], y: &[T]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut j = 0;
    while j < y.len() {
        let mut best: Option<(usize, usize)> = None;
        for start in 0..x.len() {
            for end in start + 1..=x.len() {
                let len = end - start;
                if j + len > y.len() || x[start..end] != y[j..j + len] {
                    continue;
                }
                if best.is_none_or(|(_, l)| len > l) {
                    best = Some((start, len));
                }
            }
        }
        match best {
            Some((s, l)) => {
                out.push((s, j, l));
                j += l;
            }
            None => j += 1,
        }
    }
    out
}

pub fn efd_oracle<T: PartialEq>(x: &[T], y: &[T]) -> f64 {
    let sq: usize = fragment_oracle(x, y).iter().map(|f| f.2 * f.2).sum();
    sq as f64 / x.len() as f64
}

/// Longest common subsequence length, full table.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
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
    t[a.len()][b.len()]
}

/// Clipped n-gram matches: each reference window can be claimed once.
pub fn clipped_hits<T: PartialEq>(pred: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let pw: Vec<&[T]> = if pred.len() >= n { pred.windows(n).collect() } else { vec![] };
    let rw: Vec<&[T]> = if reference.len() >= n { reference.windows(n).collect() } else { vec![] };
    let mut used = vec![false; rw.len()];
    let mut hits = 0;
    for p in &pw {
        if let Some(k) = (0..rw.len()).find(|&k| !used[k] && rw[k] == *p) {
            used[k] = true;
            hits += 1;
        }
    }
    (hits, pw.len(), rw.len())
}

/// `(precision, recall, f1)` with zero for empty denominators.
pub fn prf(hits: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 { 0.0 } else { hits as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { hits as f64 / gold as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Distinct windows, kept in first-seen order, compared element-wise.
pub fn distinct_windows<T: PartialEq + Clone>(s: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    if s.len() < n {
        return out;
    }
    for w in s.windows(n) {
        if !out.iter().any(|o| o.as_slice() == w) {
            out.push(w.to_vec());
        }
    }
    out
}

/// Lower-cased runs of ASCII alphanumerics, every other visible character on
/// its own. Enough for the generated corpora below.
pub fn simple_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            cur.push(c.to_ascii_lowercase());
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

const STOCK: [&str; 10] = [
    "The council approved the new budget for the harbor district",
    "Heavy rain closed the mountain road for three days",
    "The council approved the budget after a long debate",
    "Local farmers sold apples and pears at the market",
    "Officials said the harbor district would get new lights",
    "Heavy rain and wind damaged several roofs near the market",
    "The mayor thanked volunteers who cleared the mountain road",
    "Students painted a mural beside the harbor",
    "Engineers inspected the bridge before reopening it",
    "The market stayed open despite the heavy rain",
];

const FILLER: [&str; 16] = [
    "river", "quiet", "orange", "seven", "lamp", "forest", "paper", "stone", "violet", "window", "garden",
    "silver", "thunder", "meadow", "copper", "harvest",
];

/// Passages as sentence lists. Each sentence starts with a capital letter and
/// ends with a period; about half reuse stock sentences so densities vary.
pub fn synthetic_passages(rng: &mut impl rand::Rng, count: usize, max_sents: usize) -> Vec<Vec<String>> {
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=max_sents);
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        format!("{}.", STOCK[rng.random_range(0..STOCK.len())])
                    } else {
                        let len = rng.random_range(3..9);
                        let words: Vec<&str> = (0..len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
                        let mut s = words.join(" ");
                        s[..1].make_ascii_uppercase();
                        s + "."
                    }
                })
                .collect()
        })
        .collect()
}

/// Sentence `k` of `sents` with the single space that follows it in the
/// space-joined passage.
pub fn piece(sents: &[String], k: usize) -> String {
    if k + 1 < sents.len() {
        format!("{} ", sents[k])
    } else {
        sents[k].clone()
    }
}

/// `max(1, round_half_up(s / 4))` in integers.
pub fn quarter_count(s: usize) -> usize {
    ((s + 2) / 4).max(1)
}

/// Density of each sentence of `sents` against the others, from scratch.
pub fn gsg_oracle(sents: &[String]) -> Vec<f64> {
    let toks: Vec<Vec<String>> = sents.iter().map(|s| simple_tokens(s)).collect();
    (0..toks.len())
        .map(|i| {
            let rest: Vec<String> = (0..toks.len()).filter(|&k| k != i).flat_map(|k| toks[k].clone()).collect();
            efd_oracle(&toks[i], &rest)
        })
        .collect()
}

pub struct PairRules {
    pub max_sents: usize,
    pub min_sents: usize,
    pub min_efd: f64,
    pub lead_k: usize,
}

/// Every contract violation of one emitted pair built from `sents` with
/// the selected sentences on the document side.
pub fn pair_violations(
    sents: &[String],
    id: &str,
    provenance: &str,
    document: &str,
    summary: &str,
    selected: &[usize],
    rules: &PairRules,
) -> Vec<String> {
    let mut bad = Vec::new();
    if document.is_empty() || summary.is_empty() {
        bad.push(format!("{id}: empty side"));
    }
    if provenance == "lead" {
        let head: String = (0..rules.lead_k.min(sents.len())).map(|k| piece(sents, k)).collect();
        let tail: String = (rules.lead_k.min(sents.len())..sents.len()).map(|k| piece(sents, k)).collect();
        if summary != head || document != tail {
            bad.push(format!("{id}: lead split differs"));
        }
        return bad;
    }
    let (lo, hi) = match provenance {
        "nat" => (0, sents.len()),
        "chunk" => {
            let k: usize = id.rsplit("#chunk").next().and_then(|s| s.parse().ok()).unwrap_or(usize::MAX);
            let lo = k.saturating_mul(rules.max_sents).min(sents.len());
            (lo, (lo + rules.max_sents).min(sents.len()))
        }
        other => {
            bad.push(format!("{id}: unknown provenance {other}"));
            return bad;
        }
    };
    let size = hi - lo;
    if provenance == "chunk" && !(rules.min_sents..=rules.max_sents).contains(&size) {
        bad.push(format!("{id}: chunk of {size} sentences"));
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) || selected.iter().any(|&k| k >= size) {
        bad.push(format!("{id}: bad indices {selected:?}"));
        return bad;
    }
    if selected.len() != quarter_count(size) {
        bad.push(format!("{id}: selected {} of {size}", selected.len()));
    }
    let want_doc: String = selected.iter().map(|&k| piece(sents, lo + k)).collect();
    let want_sum: String = (0..size).filter(|k| !selected.contains(k)).map(|k| piece(sents, lo + k)).collect();
    if document != want_doc || summary != want_sum {
        bad.push(format!("{id}: sides are not the selected and remaining sentences"));
    }
    // interleave the two sides back into the unit
    let (mut d, mut s) = (document, summary);
    let mut rebuilt = String::new();
    for k in 0..size {
        let p = piece(sents, lo + k);
        let side = if selected.contains(&k) { &mut d } else { &mut s };
        if side.starts_with(p.as_str()) {
            rebuilt.push_str(&p);
            *side = &side[p.len()..];
        }
    }
    let unit: String = (lo..hi).map(|k| piece(sents, k)).collect();
    if rebuilt != unit || !d.is_empty() || !s.is_empty() {
        bad.push(format!("{id}: sentences not conserved"));
    }
    let density = efd_oracle(&simple_tokens(document), &simple_tokens(summary));
    if density < rules.min_efd {
        bad.push(format!("{id}: density {density} below {}", rules.min_efd));
    }
    let scores = gsg_oracle(&sents[lo..hi]);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order[..selected.len().min(size)].to_vec();
    top.sort_unstable();
    if top != selected {
        bad.push(format!("{id}: selection {selected:?} but top-scoring {top:?}"));
    }
    bad
}

/// A small model with every array perturbed so no distribution is flat.
pub fn random_tiny_model(rng: &mut impl rand::Rng, seed: u64) -> prom_core::promnet::Model {
    use prom_core::promnet::{Model, ModelConfig};
    let heads = rng.random_range(1..=2);
    let cfg = ModelConfig {
        vocab_size: rng.random_range(5..30),
        model_dim: heads * rng.random_range(2..=4),
        head_count: heads,
        encoder_layers: rng.random_range(1..=2),
        decoder_layers: rng.random_range(1..=2),
        feedforward_dim: rng.random_range(4..=16),
        max_src_len: rng.random_range(1..=8),
        max_tgt_len: rng.random_range(2..=6),
        lambda: 1.0,
        seed,
        ..ModelConfig::default()
    };
    let mut m = Model::init(cfg).unwrap();
    let scale = rng.random_range(0.5..3.0);
    for a in m.params.arrays.values_mut() {
        for v in &mut a.data {
            *v = *v * scale + rng.random_range(-0.3..0.3);
        }
    }
    m
}

/// A random valid source and decoder prefix for `m`.
pub fn random_step(rng: &mut impl rand::Rng, m: &prom_core::promnet::Model) -> (Vec<u32>, Vec<u32>) {
    use prom_core::promnet::{BOS, FIRST_TOKEN};
    let v = m.config.vocab_size as u32;
    let src: Vec<u32> = (0..rng.random_range(1..=m.config.max_src_len)).map(|_| rng.random_range(FIRST_TOKEN..v)).collect();
    let mut prefix = vec![BOS];
    for _ in 0..rng.random_range(0..m.config.max_tgt_len) {
        prefix.push(rng.random_range(FIRST_TOKEN..v));
    }
    (src, prefix)
}

/// Largest deviation of `p` from a distribution (sum error or negativity).
pub fn distribution_error(p: &[f64]) -> f64 {
    let neg = p.iter().fold(0.0f64, |m, &x| m.max(-x));
    let sum: f64 = p.iter().sum();
    neg.max((sum - 1.0).abs()).max(if p.iter().all(|x| x.is_finite()) { 0.0 } else { f64::INFINITY })
}
