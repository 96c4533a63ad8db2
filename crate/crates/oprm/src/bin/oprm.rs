use clap::{Parser, Subcommand};
use oprm::harness::{run_command, ExperimentConfig, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

/// Overflow-prevention inference and associative-recall experiments for
/// fixed-state recurrent language models.
#[derive(Parser)]
#[command(name = "oprm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Experiment config file (TOML, one section per command).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker budget (default: OPRM_WORKERS or the CPU count).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the chunk size L.
    #[arg(long = "chunk-size")]
    chunk_size: Option<usize>,
    /// Override the selection criterion: entropy, likelihood, random, index.
    #[arg(long)]
    criterion: Option<String>,
    /// Override the IDK filter: on or off.
    #[arg(long = "idk-filter")]
    idk_filter: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a 2-layer recurrent model on synthetic associative recall.
    Train(Common),
    /// Evaluate a checkpoint: AR curves, capacity, histograms, sweeps.
    Eval(Common),
    /// Benchmark chunked vs monolithic prefill and decode cost.
    Bench(Common),
    /// Run one chunked generation and dump its selection trace.
    OprmRun(Common),
    /// Generate associative-recall datasets as JSON lines.
    GenData(Common),
}

fn overrides(c: &Common) -> Result<Overrides, oprm::Error> {
    let idk_filter = match c.idk_filter.as_deref() {
        None => None,
        Some("on") => Some(true),
        Some("off") => Some(false),
        Some(other) => {
            return Err(oprm::Error::Config(format!(
                "--idk-filter takes on or off, not {other:?}"
            )))
        }
    };
    Ok(Overrides {
        seed: c.seed,
        workers: c.workers,
        out_dir: c.out.clone(),
        chunk_len: c.chunk_size,
        criterion: c.criterion.clone(),
        idk_filter,
    })
}

fn run(name: &str, common: &Common) -> Result<(), oprm::Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&overrides(common)?);
    run_command(name, &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Bench(c) => ("bench", c),
        Command::OprmRun(c) => ("oprm-run", c),
        Command::GenData(c) => ("gen-data", c),
    };
    match run(name, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
