//! A short send-rate sweep over a small corpus, both transaction types.

use goods_ap::bench::{generate_corpus, prepare, sweep, CorpusSpec, LoadConfig, SweepKind, TransactionMix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusSpec {
        num_pos: 100,
        ..CorpusSpec::default()
    })?;
    let prepared = prepare(&corpus)?;
    let base = LoadConfig {
        transaction_mix: TransactionMix {
            compute_ca: 1.0,
            compute_pas: 1.0,
        },
        tx_count: 400,
        ..LoadConfig::default()
    };
    let result = sweep(SweepKind::SendRate, &[25.0, 100.0, 200.0], &base, &prepared)?;
    println!("{:<11} {:>8} {:>10} {:>10}", "type", "rate", "tx/s", "latency s");
    for row in &result.rows {
        println!(
            "{:<11} {:>8} {:>10.1} {:>10.3}",
            row.tx_type.to_string(),
            row.send_rate,
            row.throughput,
            row.latency_mean
        );
    }
    Ok(())
}
