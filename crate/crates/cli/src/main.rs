mod args;
mod config;
mod io;
mod model_cmds;
mod text_cmds;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;

/// How a run failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameter values (exit 1).
    Usage(anyhow::Error),
    /// Unreadable or malformed input data (exit 2).
    Data(anyhow::Error),
}

pub type Outcome = Result<(), Failure>;

pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

pub struct Ctx {
    pub file: FileConfig,
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).usage()?,
        None => FileConfig::default(),
    };
    let threads = cli
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("--threads must be at least 1")));
    }
    let ctx = Ctx {
        seed: cli.seed.or(file.seed),
        file,
    };
    prom_core::par::with_threads(threads, move || match cli.command {
        Command::Label(a) => text_cmds::label(&ctx, a),
        Command::Stats(a) => text_cmds::stats(&ctx, a),
        Command::Build(a) => text_cmds::build(&ctx, a),
        Command::Rouge(a) => text_cmds::rouge(a),
        Command::CopiedF1(a) => text_cmds::copied_f1(a),
        Command::EntityCoverage(a) => text_cmds::entity_coverage(a),
        Command::Synth(a) => model_cmds::synth(&ctx, a),
        Command::Train(a) => model_cmds::train(&ctx, a),
        Command::Decode(a) => model_cmds::decode(&ctx, a),
        Command::Gradcheck(a) => model_cmds::gradcheck(&ctx, a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
