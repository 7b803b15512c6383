//! Synthetic corpus generation and the load harness.

pub mod corpus;
pub mod load;
pub mod report;
pub mod setup;
pub mod sweep;

use thiserror::Error;

use crate::ledger::{LedgerError, TopologyError};

pub use corpus::{generate_corpus, Corpus, CorpusSpec, DiscrepancyRates, Range, ShipmentPlan};
pub use load::{
    prepare, run_load, run_prepared, Arrivals, CostModel, LoadConfig, Prepared, TopologySpec, TransactionMix,
};
pub use report::{BenchReport, KindReport, LatencyStats, Sample, TxKind};
pub use setup::populate;
pub use sweep::{sweep, sweep_with, write_outputs, SweepKind, SweepResult, SweepRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("invalid load config: {0}")]
    InvalidConfig(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("loading the corpus: {0}")]
    Setup(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plotting: {0}")]
    Plot(String),
}

impl From<TopologyError> for BenchError {
    fn from(e: TopologyError) -> Self {
        BenchError::Ledger(e.into())
    }
}
