//! JSONL record schema shared by the labeling, stats and scoring stages.

use serde::{Deserialize, Serialize};

/// One document/summary pair, optionally with a system prediction and copy
/// labels. Serialized one object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub document: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_label_n: Option<usize>,
}

impl Record {
    pub fn new(id: impl Into<String>, document: impl Into<String>, summary: impl Into<String>) -> Self {
        Record {
            id: id.into(),
            document: document.into(),
            summary: summary.into(),
            prediction: None,
            copy_labels: None,
            copy_label_n: None,
        }
    }
}

/// A line that failed to parse, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Parses a block of `(line_number, text)` pairs, splitting successes from
/// failures. Blank lines are ignored.
pub fn parse_lines<T: serde::de::DeserializeOwned>(
    lines: &[(usize, String)],
) -> (Vec<(usize, T)>, Vec<LineError>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (no, text) in lines {
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(text) {
            Ok(r) => ok.push((*no, r)),
            Err(e) => bad.push(LineError {
                line: *no,
                message: e.to_string(),
            }),
        }
    }
    (ok, bad)
}
