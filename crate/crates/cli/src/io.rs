use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};

use anyhow::Context;

pub fn open_input(path: &str) -> anyhow::Result<Box<dyn BufRead>> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin().lock())))
    } else {
        let f = File::open(path).with_context(|| format!("opening {path}"))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn open_output(path: &str) -> anyhow::Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        let f = File::create(path).with_context(|| format!("creating {path}"))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

/// All lines with 1-based line numbers.
pub fn numbered_lines(path: &str) -> anyhow::Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        out.push((i + 1, line.with_context(|| format!("reading {path}"))?));
    }
    Ok(out)
}

pub fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new().from_writer(out)
}
