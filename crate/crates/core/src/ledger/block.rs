use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::endorse::EndorsementPolicy;
use super::peer::{Peer, PeerConfig};
use super::tx::{Transaction, TxValidity};
use crate::time::Timestamp;

pub const GENESIS_PREV_HASH: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub number: u64,
    pub prev_hash: String,
    pub timestamp: Timestamp,
    pub transactions: Vec<Transaction>,
    pub hash: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BlockBody<'a> {
    number: u64,
    prev_hash: &'a str,
    timestamp: Timestamp,
    transactions: &'a [Transaction],
}

impl Block {
    pub fn new(number: u64, prev_hash: String, timestamp: Timestamp, transactions: Vec<Transaction>) -> Self {
        let hash = Self::compute_hash(number, &prev_hash, timestamp, &transactions);
        Self {
            number,
            prev_hash,
            timestamp,
            transactions,
            hash,
        }
    }

    fn compute_hash(number: u64, prev_hash: &str, timestamp: Timestamp, txs: &[Transaction]) -> String {
        let body = BlockBody {
            number,
            prev_hash,
            timestamp,
            transactions: txs,
        };
        let bytes = serde_json::to_vec(&body).expect("blocks serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn hash_is_valid(&self) -> bool {
        self.hash == Self::compute_hash(self.number, &self.prev_hash, self.timestamp, &self.transactions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("block {number}: expected number {expected}")]
    OutOfSequence { number: u64, expected: u64 },
    #[error("block {0}: previous-hash link broken")]
    BrokenChain(u64),
    #[error("block {0}: hash does not match contents")]
    BadHash(u64),
    #[error("block {number}: recorded validity {recorded:?} but replay gives {replayed:?}")]
    ValidityMismatch {
        number: u64,
        recorded: Vec<TxValidity>,
        replayed: Vec<TxValidity>,
    },
    #[error("block {number}: recorded state digest {recorded} but replay gives {replayed}")]
    DigestMismatch {
        number: u64,
        recorded: String,
        replayed: String,
    },
    #[error("block log: {0}")]
    Io(String),
}

/// One line of the block log: the block, the validity flags computed at
/// commit, and the world-state digest after applying it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockRecord {
    pub block: Block,
    pub validity: Vec<TxValidity>,
    pub state_digest: String,
}

/// Append-only JSON-lines file of [`BlockRecord`]s.
#[derive(Debug)]
pub struct BlockLog {
    path: PathBuf,
    file: File,
}

impl BlockLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IntegrityError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| IntegrityError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &BlockRecord) -> Result<(), IntegrityError> {
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| IntegrityError::Io(e.to_string()))
    }

    pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<BlockRecord>, IntegrityError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| IntegrityError::Io(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| IntegrityError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| IntegrityError::Io(format!("line {}: {e}", i + 1)))?;
            out.push(rec);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub blocks: u64,
    pub transactions: u64,
    pub valid: u64,
    pub state_digest: String,
}

/// Replays `records` on a fresh peer: checks the hash chain, re-validates
/// every transaction and compares validity flags and state digests.
pub fn verify_records(records: &[BlockRecord], policy: EndorsementPolicy) -> Result<(Peer, VerifyReport), IntegrityError> {
    let mut peer = Peer::new(PeerConfig::new("verifier", "VERIFIER", "local", false));
    let mut report = VerifyReport {
        blocks: 0,
        transactions: 0,
        valid: 0,
        state_digest: peer.state_digest(),
    };
    for rec in records {
        let replayed = peer.validate_and_commit(&rec.block, policy)?;
        if replayed != rec.validity {
            return Err(IntegrityError::ValidityMismatch {
                number: rec.block.number,
                recorded: rec.validity.clone(),
                replayed,
            });
        }
        let digest = peer.state_digest();
        if digest != rec.state_digest {
            return Err(IntegrityError::DigestMismatch {
                number: rec.block.number,
                recorded: rec.state_digest.clone(),
                replayed: digest,
            });
        }
        report.blocks += 1;
        report.transactions += replayed.len() as u64;
        report.valid += replayed.iter().filter(|v| **v == TxValidity::Valid).count() as u64;
        report.state_digest = digest;
    }
    Ok((peer, report))
}

pub fn verify_log(path: impl AsRef<Path>, policy: EndorsementPolicy) -> Result<VerifyReport, IntegrityError> {
    let records = BlockLog::read_all(path)?;
    verify_records(&records, policy).map(|(_, r)| r)
}
