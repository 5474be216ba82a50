use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use okra::config::RunConfig;
use okra::stages::{Run, STAGES};
use okra::Error;

/// Explainable multi-stakeholder job recommendation over a knowledge graph.
#[derive(Debug, Parser)]
#[command(name = "okra", version)]
struct Args {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stage to run: generate, build-kg, sample, train, evaluate, explain,
    /// baseline or all.
    #[arg(long, default_value = "all")]
    stage: String,
    /// Baseline for `--stage baseline`: random, tfidf, gtrans1, gtrans2 or
    /// ablation.
    #[arg(long)]
    name: Option<String>,
    /// Seed for every section; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), Error> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed.or(config.seed) {
        config.apply_seed(seed);
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    let threads = match std::env::var("OKRA_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("OKRA_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    let run = Run::new(config)?;
    match args.stage.as_str() {
        "all" => run.run_all(),
        stage if STAGES.contains(&stage) => run.run_stage(stage, args.name.as_deref()),
        other => Err(Error::Config(format!(
            "unknown stage {other:?}; expected all or one of {}",
            STAGES.join(", ")
        ))),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("okra: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
