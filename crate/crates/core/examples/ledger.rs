//! Loads a small synthetic corpus onto a ledger with a block log, then
//! replays the log on a fresh peer.

use goods_ap::bench::{generate_corpus, populate, CorpusSpec};
use goods_ap::chaincode::{self, ChaincodeConfig};
use goods_ap::ledger::{verify_log, EndorsementPolicy, Ledger, LedgerConfig, NetworkTopology, TimeMode};
use goods_ap::time::{ManualClock, Timestamp};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusSpec {
        num_pos: 10,
        ..CorpusSpec::default()
    })?;
    let dir = std::env::temp_dir().join(format!("goods-ap-ledger-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let log = dir.join("blocks.jsonl");

    let ledger = Ledger::new(
        LedgerConfig {
            block_log: Some(log.clone()),
            ..LedgerConfig::default()
        },
        NetworkTopology::single_dc(&corpus.orgs(), 2),
        chaincode::registry(&ChaincodeConfig::default()),
        TimeMode::Virtual(ManualClock::new(Timestamp(1_700_000_000_000))),
    )?;
    populate(&ledger, &corpus)?;
    println!("height {}, state digest {}", ledger.height(), ledger.state_digest());
    for (peer, digest) in ledger.peer_digests() {
        println!("  {peer}: {}", &digest[..16]);
    }

    let replay = verify_log(&log, EndorsementPolicy::Majority)?;
    println!(
        "replayed {} blocks, {} of {} transactions valid, digest {}",
        replay.blocks, replay.valid, replay.transactions, replay.state_digest
    );
    assert_eq!(replay.state_digest, ledger.state_digest());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
