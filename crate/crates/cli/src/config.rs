//! Optional parameter file. Every field mirrors a flag; flags win, then the
//! file, then built-in defaults.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub label: LabelSection,
    pub stats: StatsSection,
    pub build: BuildSection,
    pub synthetic: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub decode: DecodeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub n: Option<usize>,
    pub case_sensitive: Option<bool>,
    pub chunk: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub histogram_n: Option<usize>,
    pub bins: Option<usize>,
    pub position: Option<String>,
    pub norm: Option<String>,
    pub novelty_orders: Option<Vec<usize>>,
    pub case_sensitive: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub format: Option<String>,
    pub modes: Option<Vec<String>>,
    pub max_sents: Option<usize>,
    pub min_sents: Option<usize>,
    pub min_efd: Option<f64>,
    pub ratio: Option<f64>,
    pub lead_k: Option<usize>,
    pub orientation: Option<String>,
    pub block: Option<usize>,
    pub case_sensitive: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub vocab: Option<usize>,
    pub bank: Option<usize>,
    pub samples: Option<usize>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim: Option<usize>,
    pub heads: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub ff_dim: Option<usize>,
    pub max_src_len: Option<usize>,
    pub max_tgt_len: Option<usize>,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub baseline: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub strategy: Option<String>,
    pub warmup: Option<usize>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
}

impl FileConfig {
    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &Path) -> anyhow::Result<FileConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A boolean switch that can only be turned on by its flag.
pub fn pick_switch(flag: bool, file: Option<bool>, default: bool) -> bool {
    if flag {
        true
    } else {
        file.unwrap_or(default)
    }
}

pub fn parse_enum<T: std::str::FromStr<Err = String>>(raw: Option<String>, default: T) -> anyhow::Result<T> {
    match raw {
        None => Ok(default),
        Some(s) => match s.parse() {
            Ok(v) => Ok(v),
            Err(e) => bail!(e),
        },
    }
}
