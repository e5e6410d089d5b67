use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail};
use prom_core::copylabel::{label_corpus, LabelOptions};
use prom_core::metrics::{
    copied_ngram_f1, entity_prf, rouge_f1, CapitalizedRunRecognizer, CorpusStats, DatasetReport, EfdNorm,
    PositionStat, Prf, RougeVariant, StatsOptions,
};
use prom_core::pseudodata::{build_stream, BuildConfig, InputFormat, Orientation, Provenance};
use prom_core::record::{parse_lines, LineError, Record};
use prom_core::textcore::{tokenize, SentenceSplitter};

use crate::args::{BuildArgs, CopiedF1Args, EntityArgs, LabelArgs, RougeArgs, StatsArgs};
use crate::config::{parse_enum, pick, pick_switch};
use crate::io::{csv_writer, numbered_lines, open_input, open_output};
use crate::{Classify, Ctx, Failure, Outcome};

const STATS_BLOCK: usize = 4096;

fn report_failures(failures: &[LineError]) -> Outcome {
    for f in failures.iter().take(20) {
        eprintln!("line {}: {}", f.line, f.message);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("{} malformed input line(s) skipped", failures.len())))
    }
}

pub fn label(ctx: &Ctx, a: LabelArgs) -> Outcome {
    let f = &ctx.file.label;
    let defaults = LabelOptions::default();
    let opts = LabelOptions {
        n: pick(a.n, f.n, defaults.n),
        fold_case: !pick_switch(a.case_sensitive, f.case_sensitive, false),
        chunk: pick(a.chunk, f.chunk, defaults.chunk),
    };
    if opts.n == 0 {
        return Err(Failure::Usage(anyhow!("--n must be at least 1")));
    }
    let input = open_input(&a.io.input).data()?;
    let output = open_output(&a.io.output).data()?;
    let report = label_corpus(input, output, opts).data()?;
    eprintln!("labeled {} record(s), skipped {}", report.labeled, report.skipped);
    report_failures(&report.failures)
}

fn parse_position(s: &str) -> Result<PositionStat, String> {
    match s {
        "start" => Ok(PositionStat::Start),
        "midpoint" | "mid" => Ok(PositionStat::Midpoint),
        _ => Err(format!("unknown position statistic `{s}` (expected start or midpoint)")),
    }
}

fn parse_norm(s: &str) -> Result<EfdNorm, String> {
    match s {
        "source" => Ok(EfdNorm::Source),
        "summary" => Ok(EfdNorm::Summary),
        _ => Err(format!("unknown density normalization `{s}` (expected source or summary)")),
    }
}

fn dataset_name(path: &str, index: usize) -> String {
    if path == "-" {
        return format!("stdin{index}");
    }
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

pub fn stats(ctx: &Ctx, a: StatsArgs) -> Outcome {
    let f = &ctx.file.stats;
    let d = StatsOptions::default();
    let position = match a.position.clone().or(f.position.clone()) {
        Some(s) => parse_position(&s).map_err(|e| Failure::Usage(anyhow!(e)))?,
        None => d.position,
    };
    let norm = match a.norm.clone().or(f.norm.clone()) {
        Some(s) => parse_norm(&s).map_err(|e| Failure::Usage(anyhow!(e)))?,
        None => d.norm,
    };
    let opts = StatsOptions {
        histogram_n: pick(a.histogram_n, f.histogram_n, d.histogram_n),
        bins: pick(a.bins, f.bins, d.bins),
        position,
        novelty_orders: pick(a.novelty_orders.clone(), f.novelty_orders.clone(), d.novelty_orders),
        norm,
        fold_case: !pick_switch(a.case_sensitive, f.case_sensitive, false),
    };
    if opts.novelty_orders.contains(&0) {
        return Err(Failure::Usage(anyhow!("novelty orders must be at least 1")));
    }
    if !a.name.is_empty() && a.name.len() != a.input.len() {
        return Err(Failure::Usage(anyhow!("give one --name per --input")));
    }
    let csv = match a.format.as_str() {
        "csv" => true,
        "json" => false,
        other => return Err(Failure::Usage(anyhow!("unknown format `{other}` (expected json or csv)"))),
    };
    CorpusStats::new(&opts).usage()?;

    let mut reports: Vec<DatasetReport> = Vec::new();
    let mut failures = Vec::new();
    for (i, path) in a.input.iter().enumerate() {
        let name = a.name.get(i).cloned().unwrap_or_else(|| dataset_name(path, i));
        let lines = numbered_lines(path).data()?;
        let mut total = CorpusStats::new(&opts).usage()?;
        for block in lines.chunks(STATS_BLOCK) {
            let (ok, bad) = parse_lines::<Record>(block);
            failures.extend(bad.into_iter().map(|mut e| {
                e.message = format!("{path}: {}", e.message);
                e
            }));
            let records: Vec<Record> = ok.into_iter().map(|(_, r)| r).collect();
            total.merge(&CorpusStats::from_records(&records, &opts).data()?);
        }
        reports.push(total.report(&name));
    }

    let out = open_output(&a.output).data()?;
    if csv {
        let mut w = csv_writer(out);
        w.write_record(["dataset", "metric", "value"]).data()?;
        for r in &reports {
            for (ds, metric, value) in r.csv_rows() {
                w.write_record([ds, metric, value.to_string()]).data()?;
            }
        }
        w.flush().data()?;
    } else {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &reports).data()?;
        out.write_all(b"\n").data()?;
        out.flush().data()?;
    }
    report_failures(&failures)
}

fn resolve_build(ctx: &Ctx, a: &BuildArgs) -> anyhow::Result<(BuildConfig, InputFormat, usize)> {
    let f = &ctx.file.build;
    let d = BuildConfig::default();
    let modes = match a.mode.clone().or(f.modes.clone()) {
        Some(list) => list
            .iter()
            .map(|m| m.parse::<Provenance>().map_err(|e| anyhow!(e)))
            .collect::<anyhow::Result<Vec<_>>>()?,
        None => d.modes.clone(),
    };
    let cfg = BuildConfig {
        select_ratio: pick(a.ratio, f.ratio, d.select_ratio),
        max_sents: pick(a.max_sents, f.max_sents, d.max_sents),
        min_sents: pick(a.min_sents, f.min_sents, d.min_sents),
        min_efd: pick(a.min_efd, f.min_efd, d.min_efd),
        lead_k: pick(a.lead_k, f.lead_k, d.lead_k),
        orientation: parse_enum::<Orientation>(a.orientation.clone().or(f.orientation.clone()), d.orientation)?,
        modes,
        fold_case: !pick_switch(a.case_sensitive, f.case_sensitive, false),
    };
    cfg.validate()?;
    let format = parse_enum::<InputFormat>(a.format.clone().or(f.format.clone()), InputFormat::Jsonl)?;
    let block = pick(a.block, f.block, 256);
    if block == 0 {
        bail!("--block must be at least 1");
    }
    Ok((cfg, format, block))
}

pub fn build(ctx: &Ctx, a: BuildArgs) -> Outcome {
    let (cfg, format, block) = resolve_build(ctx, &a).usage()?;
    let input = open_input(&a.io.input).data()?;
    let output = open_output(&a.io.output).data()?;
    let manifest = build_stream(input, format, output, &cfg, &SentenceSplitter::default(), block).data()?;
    if let Some(path) = &a.manifest {
        let mut w = open_output(path).data()?;
        serde_json::to_writer_pretty(&mut w, &manifest).data()?;
        w.write_all(b"\n").data()?;
        w.flush().data()?;
    }
    let per_mode: Vec<String> = manifest.emitted.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!(
        "documents {}, emitted {} ({}), dropped by min_efd {}",
        manifest.documents,
        manifest.total_emitted(),
        per_mode.join(" "),
        manifest.dropped_min_efd
    );
    report_failures(&manifest.failures)
}

/// One sentence per line, for the summary-level LCS variant.
fn sentence_lines(text: &str) -> String {
    if text.contains('\n') {
        return text.to_string();
    }
    let seq = tokenize(text, false);
    let spans = SentenceSplitter::default().split_tokens(&seq);
    spans
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| &text[seq.offsets()[s.start_token].0..seq.offsets()[s.end_token - 1].1])
        .collect::<Vec<_>>()
        .join("\n")
}

fn mean_prf(rows: &[Prf]) -> Prf {
    if rows.is_empty() {
        return Prf::default();
    }
    let n = rows.len() as f64;
    Prf {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    }
}

fn read_records(path: &str) -> Result<(Vec<Record>, Vec<LineError>), Failure> {
    let lines = numbered_lines(path).data()?;
    let (ok, bad) = parse_lines::<Record>(&lines);
    Ok((ok.into_iter().map(|(_, r)| r).collect(), bad))
}

fn prediction_of(r: &Record) -> Result<&str, Failure> {
    r.prediction
        .as_deref()
        .ok_or_else(|| Failure::Data(anyhow!("record `{}` has no prediction", r.id)))
}

pub fn rouge(a: RougeArgs) -> Outcome {
    let mut failures = Vec::new();
    let pairs: Vec<(String, String, String)> = match (&a.input, &a.pred, &a.reference) {
        (Some(path), _, _) => {
            let (recs, bad) = read_records(path)?;
            failures = bad;
            recs.iter()
                .map(|r| Ok((r.id.clone(), prediction_of(r)?.to_string(), r.summary.clone())))
                .collect::<Result<_, Failure>>()?
        }
        (None, Some(p), Some(r)) => {
            let preds = numbered_lines(p).data()?;
            let refs = numbered_lines(r).data()?;
            if preds.len() != refs.len() {
                return Err(Failure::Data(anyhow!(
                    "{} predictions but {} references",
                    preds.len(),
                    refs.len()
                )));
            }
            preds
                .into_iter()
                .zip(refs)
                .map(|((i, p), (_, r))| (i.to_string(), p, r))
                .collect()
        }
        _ => return Err(Failure::Usage(anyhow!("give --pred and --ref, or --input"))),
    };
    let scored: Vec<Vec<Prf>> = prom_core::par::map_ordered(&pairs, |(_, p, r)| {
        RougeVariant::ALL
            .iter()
            .map(|&v| {
                let s = match v {
                    RougeVariant::RougeLsum => rouge_f1(&sentence_lines(p), &sentence_lines(r), v),
                    _ => rouge_f1(p, r, v),
                };
                Prf {
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                }
            })
            .collect()
    });
    let mut w = csv_writer(open_output(&a.output).data()?);
    w.write_record(["scope", "variant", "precision", "recall", "f1"]).data()?;
    if a.per_example {
        for ((id, _, _), row) in pairs.iter().zip(&scored) {
            for (v, s) in RougeVariant::ALL.iter().zip(row) {
                w.write_record([id.clone(), v.to_string(), s.precision.to_string(), s.recall.to_string(), s.f1.to_string()])
                    .data()?;
            }
        }
    }
    for (k, v) in RougeVariant::ALL.iter().enumerate() {
        let col: Vec<Prf> = scored.iter().map(|r| r[k]).collect();
        let m = mean_prf(&col);
        w.write_record(["mean".to_string(), v.to_string(), m.precision.to_string(), m.recall.to_string(), m.f1.to_string()])
            .data()?;
    }
    w.flush().data()?;
    report_failures(&failures)
}

pub fn copied_f1(a: CopiedF1Args) -> Outcome {
    if a.n.contains(&0) {
        return Err(Failure::Usage(anyhow!("n-gram orders must be at least 1")));
    }
    let (recs, failures) = read_records(&a.input)?;
    for r in &recs {
        prediction_of(r)?;
    }
    let fold = !a.case_sensitive;
    let rows: Vec<Vec<Prf>> = prom_core::par::map_ordered(&recs, |r| {
        let src = tokenize(&r.document, fold);
        let gold = tokenize(&r.summary, fold);
        let pred = tokenize(r.prediction.as_deref().unwrap_or(""), fold);
        a.n.iter()
            .map(|&n| copied_ngram_f1(&src, &gold, &pred, n).expect("order checked above"))
            .collect()
    });
    let mut w = csv_writer(open_output(&a.output).data()?);
    w.write_record(["n", "precision", "recall", "f1", "examples"]).data()?;
    for (k, n) in a.n.iter().enumerate() {
        let col: Vec<Prf> = rows.iter().map(|r| r[k]).collect();
        let m = mean_prf(&col);
        w.write_record([n.to_string(), m.precision.to_string(), m.recall.to_string(), m.f1.to_string(), recs.len().to_string()])
            .data()?;
    }
    w.flush().data()?;
    report_failures(&failures)
}

pub fn entity_coverage(a: EntityArgs) -> Outcome {
    let mut recognizer = CapitalizedRunRecognizer::default();
    if let Some(path) = &a.gazetteer {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(anyhow!("reading {path}: {e}")))?;
        recognizer = recognizer.with_gazetteer(&text);
    }
    let (recs, failures) = read_records(&a.input)?;
    for r in &recs {
        prediction_of(r)?;
    }
    let rows: Vec<Prf> = prom_core::par::map_ordered(&recs, |r| {
        let gold = tokenize(&r.summary, false);
        let pred = tokenize(r.prediction.as_deref().unwrap_or(""), false);
        entity_prf(&gold, &pred, &recognizer)
    });
    let m = mean_prf(&rows);
    let mut w = csv_writer(open_output(&a.output).data()?);
    w.write_record(["precision", "recall", "f1", "examples"]).data()?;
    w.write_record([m.precision.to_string(), m.recall.to_string(), m.f1.to_string(), recs.len().to_string()])
        .data()?;
    w.flush().data()?;
    report_failures(&failures)
}
