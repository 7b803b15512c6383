use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use goods_ap::bench::{
    generate_corpus, prepare, run_prepared, sweep_with, write_outputs, BenchError, Corpus, CorpusSpec, LoadConfig,
    SweepKind,
};

#[derive(Parser)]
#[command(name = "bench", about = "Corpus generator and load harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic corpus to a directory.
    Generate {
        /// Corpus spec (.json or .toml); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One load run; writes the JSON report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One run per grid point; writes a CSV table and SVG plots.
    Sweep {
        #[arg(long, value_parser = parse_kind)]
        kind: SweepKind,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        /// Base load config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct CorpusArgs {
    /// Directory written by `bench generate`.
    #[arg(long, conflicts_with = "corpus_spec")]
    corpus: Option<PathBuf>,
    /// Generate the corpus from this spec instead.
    #[arg(long)]
    corpus_spec: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus, BenchError> {
        match (&self.corpus, &self.corpus_spec) {
            (Some(dir), _) => Corpus::read_from(dir),
            (None, Some(spec)) => generate_corpus(&read::<CorpusSpec>(spec)?),
            (None, None) => generate_corpus(&CorpusSpec::default()),
        }
    }
}

fn parse_kind(s: &str) -> Result<SweepKind, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn read<T: DeserializeOwned>(path: &Path) -> Result<T, BenchError> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| BenchError::InvalidConfig(format!("{}: {e}", path.display())))
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

fn config(path: &Option<PathBuf>) -> Result<LoadConfig, BenchError> {
    path.as_deref().map_or_else(|| Ok(LoadConfig::default()), read)
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<(), BenchError> {
    match cmd {
        Cmd::Generate { spec, out } => {
            let spec = spec.as_deref().map_or_else(|| Ok(CorpusSpec::default()), read)?;
            let corpus = generate_corpus(&spec)?;
            corpus.write_to(&out)?;
            println!(
                "{} purchase orders, {} line items, {} documents, {} events -> {}",
                corpus.purchase_orders.len(),
                corpus.tuples().len(),
                corpus.document_count(),
                corpus.events.len(),
                out.display()
            );
        }
        Cmd::Run { config: path, corpus, out } => {
            let cfg = config(&path)?;
            let prepared = prepare(&corpus.load()?)?;
            let report = run_prepared(&cfg, &prepared)?;
            std::fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
            for (kind, k) in &report.per_type {
                println!(
                    "{kind}: {} valid / {} submitted, {:.1} tx/s, latency mean {:.3} s p95 {:.3} s",
                    k.valid, k.submitted, k.throughput, k.latency.mean, k.latency.p95
                );
            }
        }
        Cmd::Sweep { kind, grid, config: path, corpus, out } => {
            let base = config(&path)?;
            let prepared = prepare(&corpus.load()?)?;
            let result = sweep_with(kind, &grid, &base, &prepared, |row, _| {
                println!(
                    "{} {} = {}: {:.1} tx/s, latency mean {:.3} s",
                    row.tx_type,
                    kind.as_str(),
                    row.x,
                    row.throughput,
                    row.latency_mean
                );
            })?;
            for p in write_outputs(&result, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
