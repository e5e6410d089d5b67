use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "prom", version, about = "Phrase-level copy labels, pseudo-summary data, metrics and a copy-enhanced summarizer")]
pub struct Cli {
    /// Worker threads; defaults to PROM_THREADS or the number of CPUs.
    #[arg(long, global = true, env = "PROM_THREADS")]
    pub threads: Option<usize>,

    /// TOML or JSON file with per-subcommand parameter blocks.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add n-gram copy labels to JSONL records.
    Label(LabelArgs),
    /// Extractiveness statistics and the overlap position histogram.
    Stats(StatsArgs),
    /// Build pseudo summarization pairs from raw passages.
    Build(BuildArgs),
    /// ROUGE-1/2/L/Lsum between predictions and references.
    Rouge(RougeArgs),
    /// Copied-n-gram precision, recall and F1.
    CopiedF1(CopiedF1Args),
    /// Entity precision, recall and F1 of predictions.
    EntityCoverage(EntityArgs),
    /// Write a synthetic copy task as JSONL.
    Synth(SynthArgs),
    /// Train the copy-enhanced model.
    Train(TrainArgs),
    /// Beam-decode sources with a trained checkpoint.
    Decode(DecodeArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Input path, `-` for stdin.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    /// Output path, `-` for stdout.
    #[arg(long, short, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// N-gram order.
    #[arg(long)]
    pub n: Option<usize>,
    /// Match tokens case-sensitively.
    #[arg(long)]
    pub case_sensitive: bool,
    /// Records per parallel batch.
    #[arg(long)]
    pub chunk: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Input JSONL files, one per dataset; `-` reads stdin.
    #[arg(long, short, required = true)]
    pub input: Vec<String>,
    /// Dataset names, in input order; defaults to file stems.
    #[arg(long)]
    pub name: Vec<String>,
    #[arg(long, short, default_value = "-")]
    pub output: String,
    /// `json` report or `csv` figure rows.
    #[arg(long, default_value = "json")]
    pub format: String,
    /// N-gram order for the position histogram.
    #[arg(long)]
    pub histogram_n: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// `start` or `midpoint` of the matched window.
    #[arg(long)]
    pub position: Option<String>,
    /// Normalize density by `source` or `summary` length.
    #[arg(long)]
    pub norm: Option<String>,
    /// Comma-separated novelty orders.
    #[arg(long, value_delimiter = ',')]
    pub novelty_orders: Option<Vec<usize>>,
    #[arg(long)]
    pub case_sensitive: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// `jsonl` with {"id","text"} lines, or `text` passages split by blank lines.
    #[arg(long)]
    pub format: Option<String>,
    /// Builders to run: nat, chunk, lead (comma-separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub mode: Option<Vec<String>>,
    #[arg(long)]
    pub max_sents: Option<usize>,
    #[arg(long)]
    pub min_sents: Option<usize>,
    #[arg(long)]
    pub min_efd: Option<f64>,
    /// Fraction of sentences selected by density score.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Sentences taken by the lead builder.
    #[arg(long)]
    pub lead_k: Option<usize>,
    /// `literal` or `gsg`.
    #[arg(long)]
    pub orientation: Option<String>,
    /// Write the build manifest here as JSON.
    #[arg(long)]
    pub manifest: Option<String>,
    /// Documents per parallel batch.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long)]
    pub case_sensitive: bool,
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    /// Predictions, one per line.
    #[arg(long)]
    pub pred: Option<String>,
    /// References, one per line.
    #[arg(long = "ref")]
    pub reference: Option<String>,
    /// JSONL records with `prediction` and `summary` fields instead.
    #[arg(long, short, conflicts_with_all = ["pred", "reference"])]
    pub input: Option<String>,
    #[arg(long, short, default_value = "-")]
    pub output: String,
    /// Also emit one row per example.
    #[arg(long)]
    pub per_example: bool,
}

#[derive(Debug, Args)]
pub struct CopiedF1Args {
    /// JSONL records with `document`, `summary` and `prediction`.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, short, default_value = "-")]
    pub output: String,
    /// Comma-separated n-gram orders.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub n: Vec<usize>,
    #[arg(long)]
    pub case_sensitive: bool,
}

#[derive(Debug, Args)]
pub struct EntityArgs {
    /// JSONL records with `summary` and `prediction`.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, short, default_value = "-")]
    pub output: String,
    /// Extra entity names, one per line.
    #[arg(long)]
    pub gazetteer: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct SynthOpts {
    /// Vocabulary size of the synthetic task.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Number of rare phrase tokens.
    #[arg(long)]
    pub bank: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed for the generated data; defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthOpts,
    #[arg(long, short, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Args, Clone)]
pub struct ModelOpts {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    #[arg(long)]
    pub ff_dim: Option<usize>,
    #[arg(long)]
    pub max_src_len: Option<usize>,
    #[arg(long)]
    pub max_tgt_len: Option<usize>,
    /// Copy-label order.
    #[arg(long)]
    pub n: Option<usize>,
    /// Weight of the indicator loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Train the pointer-generator baseline: no indicator loss, no fusion.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSONL training triples {"src","tgt","copy_mask"?}; omit to
    /// generate the synthetic task.
    #[arg(long)]
    pub data: Option<String>,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    /// `multi-task` or `two-stage`.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Indicator-only steps for two-stage training.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Where to write the checkpoint.
    #[arg(long)]
    pub checkpoint: String,
    /// Per-step losses as JSONL.
    #[arg(long)]
    pub log: Option<String>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: String,
    /// JSONL lines with a `src` id array (and optionally `tgt`).
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, short, default_value = "-")]
    pub output: String,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Coordinates to sample.
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, short, default_value = "-")]
    pub output: String,
}
