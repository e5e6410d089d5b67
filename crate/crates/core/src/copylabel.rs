//! Binary copy labels: a source token is marked when it lies inside a source
//! n-gram window that also occurs verbatim in the target.

use std::collections::HashSet;
use std::hash::Hash;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::record::{parse_lines, LineError, Record};
use crate::textcore::{tokenize, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyLabelMask {
    pub labels: Vec<u8>,
    pub n: usize,
}

impl CopyLabelMask {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&c| c == 1).count()
    }
}

/// Labels over arbitrary token types. Target n-grams are held as a set, so a
/// target n-gram may license several source windows.
pub fn label_copy_by<T: Eq + Hash>(src: &[T], tgt: &[T], n: usize) -> Result<CopyLabelMask> {
    if n == 0 {
        return Err(Error::ZeroOrder);
    }
    let mut labels = vec![0u8; src.len()];
    if src.len() >= n && tgt.len() >= n {
        let targets: HashSet<&[T]> = tgt.windows(n).collect();
        for (i, w) in src.windows(n).enumerate() {
            if targets.contains(w) {
                labels[i..i + n].fill(1);
            }
        }
    }
    Ok(CopyLabelMask { labels, n })
}

pub fn label_copy_tokens(src: &TokenSeq, tgt: &TokenSeq, n: usize) -> Result<CopyLabelMask> {
    label_copy_by(src.tokens(), tgt.tokens(), n)
}

/// Outcome of a corpus labeling pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelReport {
    pub labeled: usize,
    pub skipped: usize,
    pub failures: Vec<LineError>,
}

#[derive(Debug, Clone, Copy)]
pub struct LabelOptions {
    pub n: usize,
    pub fold_case: bool,
    /// Records parsed and labeled per parallel batch.
    pub chunk: usize,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            n: 2,
            fold_case: true,
            chunk: 1024,
        }
    }
}

pub fn label_record(mut rec: Record, n: usize, fold_case: bool) -> Result<Record> {
    let src = tokenize(&rec.document, fold_case);
    let tgt = tokenize(&rec.summary, fold_case);
    let mask = label_copy_tokens(&src, &tgt, n)?;
    rec.copy_labels = Some(mask.labels);
    rec.copy_label_n = Some(n);
    Ok(rec)
}

/// Streams JSONL records from `input`, writing each with `copy_labels` and
/// `copy_label_n` added. Output order equals input order; malformed lines are
/// skipped and reported by line number. Only I/O errors abort.
pub fn label_corpus<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    opts: LabelOptions,
) -> Result<LabelReport> {
    if opts.n == 0 {
        return Err(Error::ZeroOrder);
    }
    let mut report = LabelReport::default();
    let mut block: Vec<(usize, String)> = Vec::with_capacity(opts.chunk.max(1));
    let mut flush = |block: &mut Vec<(usize, String)>, report: &mut LabelReport| -> Result<()> {
        let (records, failures) = parse_lines::<Record>(block);
        report.skipped += failures.len();
        report.failures.extend(failures);
        let labeled = par::map_ordered(&records, |(_, r)| label_record(r.clone(), opts.n, opts.fold_case));
        for rec in labeled {
            serde_json::to_writer(&mut output, &rec?)?;
            output.write_all(b"\n")?;
            report.labeled += 1;
        }
        block.clear();
        Ok(())
    };
    for (i, line) in input.lines().enumerate() {
        block.push((i + 1, line?));
        if block.len() >= opts.chunk.max(1) {
            flush(&mut block, &mut report)?;
        }
    }
    flush(&mut block, &mut report)?;
    output.flush()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_vocabularies_give_zero_mask() {
        let m = label_copy_by(&["a", "b", "c"], &["x", "y"], 2).unwrap();
        assert_eq!(m.labels, vec![0, 0, 0]);
    }

    #[test]
    fn short_source_is_all_zero() {
        let m = label_copy_by(&["a"], &["a", "b"], 2).unwrap();
        assert_eq!(m.labels, vec![0]);
    }

    #[test]
    fn rejects_zero_order() {
        assert!(matches!(label_copy_by(&["a"], &["a"], 0), Err(Error::ZeroOrder)));
    }

    #[test]
    fn overlapping_windows_merge() {
        let m = label_copy_by(&[1, 2, 3, 9, 2, 3], &[1, 2, 3], 2).unwrap();
        assert_eq!(m.labels, vec![1, 1, 1, 0, 1, 1]);
    }

    #[test]
    fn self_labels_everything() {
        let x = [4, 4, 5, 1];
        assert_eq!(label_copy_by(&x, &x, 3).unwrap().labels, vec![1; 4]);
    }

    #[test]
    fn empty_stream_reports_zero() {
        let mut out = Vec::new();
        let r = label_corpus(&b""[..], &mut out, LabelOptions::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(r, LabelReport::default());
    }

    #[test]
    fn malformed_lines_are_counted() {
        let input = "{\"id\":\"a\",\"document\":\"x y\",\"summary\":\"x y\"}\nnot json\n\n{\"id\":\"b\"}\n";
        let mut out = Vec::new();
        let r = label_corpus(input.as_bytes(), &mut out, LabelOptions::default()).unwrap();
        assert_eq!(r.labeled, 1);
        assert_eq!(r.skipped, 2);
        assert_eq!(r.failures.iter().map(|f| f.line).collect::<Vec<_>>(), vec![2, 4]);
        let line = String::from_utf8(out).unwrap();
        assert!(line.contains("\"copy_labels\":[1,1]"));
        assert!(line.contains("\"copy_label_n\":2"));
    }
}
