use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use anyhow::{anyhow, Context};
use prom_core::copylabel::{label_copy_by, CopyLabelMask};
use prom_core::metrics::copied_ngram_f1_by;
use prom_core::promnet::{
    beam_decode, gradient_check, read_checkpoint, write_checkpoint, Example, ModelConfig, Model,
    Strategy, SyntheticTask, TrainConfig, EOS, FIRST_TOKEN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::{DecodeArgs, GradcheckArgs, ModelOpts, SynthArgs, SynthOpts, TrainArgs};
use crate::config::{parse_enum, pick, pick_switch};
use crate::io::{numbered_lines, open_output};
use crate::{Classify, Ctx, Failure, Outcome};

const DEFAULT_BANK: usize = 150;
const DEFAULT_SAMPLES: usize = 2000;

fn synth_task(ctx: &Ctx, o: &SynthOpts) -> anyhow::Result<(SyntheticTask, usize, u64)> {
    let f = &ctx.file.synthetic;
    let vocab = pick(o.vocab, f.vocab, ModelConfig::default().vocab_size);
    let bank = pick(o.bank, f.bank, DEFAULT_BANK);
    let samples = pick(o.samples, f.samples, DEFAULT_SAMPLES);
    let seed = o.data_seed.or(f.data_seed).or(ctx.seed).unwrap_or(0);
    Ok((SyntheticTask::new(vocab, bank)?, samples, seed))
}

fn write_jsonl<T: Serialize>(path: &str, rows: &[T]) -> anyhow::Result<()> {
    let mut w = open_output(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Outcome {
    let (task, samples, seed) = synth_task(ctx, &a.synth).usage()?;
    let data = task.generate(samples, seed).data()?;
    write_jsonl(&a.output, &data).data()
}

/// A training line; the end symbol and copy mask are filled in when absent.
#[derive(Debug, Deserialize)]
struct TrainLine {
    src: Vec<u32>,
    tgt: Vec<u32>,
    #[serde(default)]
    copy_mask: Option<MaskField>,
}

/// Either a bare 0/1 array or the `{labels, n}` object that `synth` writes.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MaskField {
    Labels(Vec<u8>),
    Mask(CopyLabelMask),
}

fn load_examples(path: &str, n: usize) -> Result<Vec<Example>, Failure> {
    let lines = numbered_lines(path).data()?;
    let (ok, bad) = prom_core::record::parse_lines::<TrainLine>(&lines);
    if let Some(e) = bad.first() {
        return Err(Failure::Data(anyhow!("{path} line {}: {}", e.line, e.message)));
    }
    let mut out = Vec::with_capacity(ok.len());
    for (no, mut t) in ok {
        if t.tgt.last() != Some(&EOS) {
            t.tgt.push(EOS);
        }
        let copy_mask = match t.copy_mask {
            Some(field) => {
                let labels = match field {
                    MaskField::Labels(l) => l,
                    MaskField::Mask(m) => m.labels,
                };
                if labels.len() != t.src.len() || labels.iter().any(|&c| c > 1) {
                    return Err(Failure::Data(anyhow!("{path} line {no}: copy_mask must be 0/1 per source token")));
                }
                CopyLabelMask { labels, n }
            }
            None => label_copy_by(&t.src, &t.tgt, n).map_err(|e| Failure::Data(anyhow!("{path} line {no}: {e}")))?,
        };
        out.push(Example {
            src: t.src,
            tgt: t.tgt,
            copy_mask,
        });
    }
    if out.is_empty() {
        return Err(Failure::Data(anyhow!("{path}: no training examples")));
    }
    Ok(out)
}

fn model_config(ctx: &Ctx, o: &ModelOpts, vocab: usize, lengths: (usize, usize), seed: u64) -> ModelConfig {
    let f = &ctx.file.model;
    let d = ModelConfig::default();
    let cfg = ModelConfig {
        vocab_size: vocab,
        model_dim: pick(o.dim, f.dim, d.model_dim),
        head_count: pick(o.heads, f.heads, d.head_count),
        encoder_layers: pick(o.encoder_layers, f.encoder_layers, d.encoder_layers),
        decoder_layers: pick(o.decoder_layers, f.decoder_layers, d.decoder_layers),
        feedforward_dim: pick(o.ff_dim, f.ff_dim, d.feedforward_dim),
        max_src_len: pick(o.max_src_len, f.max_src_len, lengths.0),
        max_tgt_len: pick(o.max_tgt_len, f.max_tgt_len, lengths.1),
        n: pick(o.n, f.n, d.n),
        lambda: pick(o.lambda, f.lambda, d.lambda),
        seed,
        fusion: d.fusion,
    };
    if pick_switch(o.baseline, f.baseline, false) {
        cfg.baseline()
    } else {
        cfg
    }
}

fn train_config(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let f = &ctx.file.train;
    let d = TrainConfig::default();
    let tcfg = TrainConfig {
        strategy: parse_enum::<Strategy>(a.strategy.clone().or(f.strategy.clone()), d.strategy)?,
        warmup_steps: a.warmup.or(f.warmup),
        total_steps: pick(a.steps, f.steps, d.total_steps),
        batch_size: pick(a.batch, f.batch, d.batch_size),
        learning_rate: pick(a.lr, f.lr, d.learning_rate),
        beam_size: d.beam_size,
        seed: ctx.seed.unwrap_or(0),
    };
    tcfg.validate()?;
    Ok(tcfg)
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> Outcome {
    let tcfg = train_config(ctx, &a).usage()?;
    let seed = ctx.seed.unwrap_or(0);
    let n = pick(a.model.n, ctx.file.model.n, ModelConfig::default().n);
    let (data, vocab, lengths) = match &a.data {
        Some(path) => {
            let data = load_examples(path, n)?;
            let max_id = data.iter().flat_map(|e| e.src.iter().chain(&e.tgt)).copied().max().unwrap_or(0);
            let vocab = pick(a.synth.vocab, ctx.file.synthetic.vocab, (max_id as usize + 1).max(FIRST_TOKEN as usize + 1));
            let src_len = data.iter().map(|e| e.src.len()).max().unwrap_or(1);
            let tgt_len = data.iter().map(|e| e.tgt.len()).max().unwrap_or(1);
            (data, vocab, (src_len, tgt_len))
        }
        None => {
            let (mut task, samples, data_seed) = synth_task(ctx, &a.synth).usage()?;
            task.n = n;
            let data = task.generate(samples, data_seed).usage()?;
            (data, task.vocab_size, task.max_lengths())
        }
    };
    let cfg = model_config(ctx, &a.model, vocab, lengths, seed);
    cfg.validate().usage()?;

    let mut log_file = match &a.log {
        Some(p) => Some(open_output(p).data()?),
        None => None,
    };
    let log: Option<&mut dyn Write> = log_file.as_mut().map(|w| w.as_mut() as &mut dyn Write);
    let (model, history) = prom_core::promnet::train(&cfg, &tcfg, &data, log).data()?;
    if let Some(mut w) = log_file {
        w.flush().data()?;
    }
    let mut out = BufWriter::new(File::create(&a.checkpoint).with_context(|| format!("creating {}", a.checkpoint)).data()?);
    write_checkpoint(&model, &mut out).data()?;
    out.flush().data()?;
    if let Some(last) = history.last() {
        eprintln!(
            "trained {} step(s); last loss_summ {:.4} loss_copy {:.4}",
            history.len(),
            last.loss_summ,
            last.loss_copy
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DecodeLine {
    src: Vec<u32>,
    #[serde(default)]
    tgt: Option<Vec<u32>>,
}

#[derive(Debug, Serialize)]
struct DecodeOut {
    line: usize,
    tokens: Vec<u32>,
    log_prob: f64,
    score: f64,
    finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    copied_f1: Option<f64>,
}

fn load_model(path: &str) -> anyhow::Result<Model> {
    let f = File::open(path).with_context(|| format!("opening {path}"))?;
    Ok(read_checkpoint(&mut BufReader::new(f))?)
}

pub fn decode(ctx: &Ctx, a: DecodeArgs) -> Outcome {
    let f = &ctx.file.decode;
    let beam = pick(a.beam, f.beam, TrainConfig::default().beam_size);
    if beam == 0 {
        return Err(Failure::Usage(anyhow!("--beam must be at least 1")));
    }
    let model = load_model(&a.checkpoint).data()?;
    let max_len = pick(a.max_len, f.max_len, model.config.max_tgt_len);
    let lines = numbered_lines(&a.input).data()?;
    let (ok, bad) = prom_core::record::parse_lines::<DecodeLine>(&lines);
    if let Some(e) = bad.first() {
        return Err(Failure::Data(anyhow!("line {}: {}", e.line, e.message)));
    }
    let n = model.config.n;
    let results = prom_core::par::map_ordered(&ok, |(no, d)| {
        let out = beam_decode(&model, &d.src, beam, max_len).map_err(|e| anyhow!("line {no}: {e}"))?;
        let copied_f1 = match &d.tgt {
            Some(t) => {
                let gold: Vec<u32> = t.iter().copied().filter(|&x| x != EOS).collect();
                Some(copied_ngram_f1_by(&d.src, &gold, out.content(), n)?.f1)
            }
            None => None,
        };
        Ok::<_, anyhow::Error>(DecodeOut {
            line: *no,
            score: out.score(),
            tokens: out.tokens,
            log_prob: out.log_prob,
            finished: out.finished,
            copied_f1,
        })
    });
    let rows = results.into_iter().collect::<anyhow::Result<Vec<_>>>().data()?;
    write_jsonl(&a.output, &rows).data()
}

fn gradcheck_config(seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 23,
        model_dim: 8,
        head_count: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        feedforward_dim: 16,
        max_src_len: 7,
        max_tgt_len: 5,
        seed,
        ..ModelConfig::default()
    }
}

fn random_batch(cfg: &ModelConfig, count: usize, rng: &mut ChaCha8Rng) -> anyhow::Result<Vec<Example>> {
    let lo = FIRST_TOKEN;
    let hi = cfg.vocab_size as u32;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let src: Vec<u32> = (0..rng.random_range(2..=cfg.max_src_len)).map(|_| rng.random_range(lo..hi)).collect();
        let mut tgt: Vec<u32> = (0..rng.random_range(1..cfg.max_tgt_len))
            .map(|_| {
                if rng.random_bool(0.6) {
                    src[rng.random_range(0..src.len())]
                } else {
                    rng.random_range(lo..hi)
                }
            })
            .collect();
        tgt.push(EOS);
        let copy_mask = label_copy_by(&src, &tgt, cfg.n)?;
        out.push(Example { src, tgt, copy_mask });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct GradcheckOut {
    coords: usize,
    step: f64,
    tol: f64,
    max_rel_error: f64,
    passed: bool,
    worst: Vec<prom_core::promnet::gradcheck::CoordCheck>,
}

pub fn gradcheck(ctx: &Ctx, a: GradcheckArgs) -> Outcome {
    if a.coords == 0 || !(a.step > 0.0) || !(a.tol > 0.0) {
        return Err(Failure::Usage(anyhow!("--coords, --step and --tol must be positive")));
    }
    let seed = ctx.seed.unwrap_or(0);
    let cfg = gradcheck_config(seed);
    let model = Model::init(cfg.clone()).data()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let batch = random_batch(&cfg, 3, &mut rng).data()?;
    let report = gradient_check(&model, &batch, a.coords, a.step, seed).data()?;
    let mut worst = report.checks.clone();
    worst.sort_by(|x, y| y.rel_error.total_cmp(&x.rel_error));
    worst.truncate(5);
    let out = GradcheckOut {
        coords: report.checks.len(),
        step: a.step,
        tol: a.tol,
        max_rel_error: report.max_rel_error,
        passed: report.max_rel_error <= a.tol,
        worst,
    };
    let mut w = open_output(&a.output).data()?;
    serde_json::to_writer_pretty(&mut w, &out).data()?;
    w.write_all(b"\n").data()?;
    w.flush().data()?;
    if out.passed {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!(
            "max relative error {:.3e} exceeds {:.1e}",
            out.max_rel_error,
            a.tol
        )))
    }
}
