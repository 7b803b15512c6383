use serde::{Deserialize, Serialize};

use super::block::{Block, IntegrityError, GENESIS_PREV_HASH};
use super::endorse::EndorsementPolicy;
use super::state::{StateView, Version, WorldState};
use super::tx::{Transaction, TxValidity};
use crate::edi::OrgId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerConfig {
    pub peer_id: String,
    pub org_id: OrgId,
    pub datacenter_id: String,
    pub endorser: bool,
}

impl PeerConfig {
    pub fn new(peer: &str, org: &str, dc: &str, endorser: bool) -> Self {
        Self {
            peer_id: peer.to_string(),
            org_id: OrgId::from(org),
            datacenter_id: dc.to_string(),
            endorser,
        }
    }
}

/// A committing peer: its own copy of the world state and chain tip.
#[derive(Debug, Clone)]
pub struct Peer {
    pub config: PeerConfig,
    state: WorldState,
    height: u64,
    last_hash: String,
}

impl Peer {
    pub fn new(config: PeerConfig) -> Self {
        Self {
            config,
            state: WorldState::new(),
            height: 0,
            last_hash: GENESIS_PREV_HASH.to_string(),
        }
    }

    /// Same state and chain tip under another identity.
    pub fn replica(&self, config: PeerConfig) -> Self {
        Self {
            config,
            ..self.clone()
        }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Number of committed blocks.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn last_hash(&self) -> &str {
        &self.last_hash
    }

    pub fn state_digest(&self) -> String {
        self.state.digest()
    }

    /// Validates every transaction of `block` in order and applies the
    /// valid ones. Chain integrity failures are fatal.
    pub fn validate_and_commit(
        &mut self,
        block: &Block,
        policy: EndorsementPolicy,
    ) -> Result<Vec<TxValidity>, IntegrityError> {
        if block.number != self.height {
            return Err(IntegrityError::OutOfSequence {
                number: block.number,
                expected: self.height,
            });
        }
        if block.prev_hash != self.last_hash {
            return Err(IntegrityError::BrokenChain(block.number));
        }
        if !block.hash_is_valid() {
            return Err(IntegrityError::BadHash(block.number));
        }
        let mut out = Vec::with_capacity(block.transactions.len());
        for (i, tx) in block.transactions.iter().enumerate() {
            let validity = validate_tx(&self.state, tx, policy);
            if validity == TxValidity::Valid {
                self.state
                    .apply(&tx.execution.rwset.writes, Version::new(block.number, i as u32));
            }
            out.push(validity);
        }
        self.height += 1;
        self.last_hash = block.hash.clone();
        Ok(out)
    }
}

/// Endorsement policy first, then read-set versions against `state`.
pub fn validate_tx(state: &dyn StateView, tx: &Transaction, policy: EndorsementPolicy) -> TxValidity {
    let digest = tx.execution.digest();
    let mut peers: Vec<&str> = tx.endorsements.iter().map(|e| e.peer_id.as_str()).collect();
    peers.sort_unstable();
    peers.dedup();
    let all_signed = tx.endorsements.iter().all(|e| e.verify(&digest));
    if !all_signed
        || peers.len() != tx.endorsements.len()
        || !policy.satisfied(peers.len() as u32, tx.endorsers_total)
    {
        return TxValidity::EndorsementFailure;
    }
    let rw = &tx.execution.rwset;
    for (key, seen) in &rw.reads {
        if state.get(key).map(|v| v.version) != *seen {
            return TxValidity::MvccConflict;
        }
    }
    for (prefix, seen) in &rw.range_reads {
        let now: Vec<(&str, Version)> = state
            .scan(prefix)
            .into_iter()
            .map(|(k, v)| (k, v.version))
            .collect();
        let same = now.len() == seen.len()
            && now
                .iter()
                .zip(seen)
                .all(|((k, v), (sk, sv))| *k == sk && v == sv);
        if !same {
            return TxValidity::MvccConflict;
        }
    }
    TxValidity::Valid
}
