use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::state::Version;
use crate::edi::OrgId;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub String);

impl TxId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TxId {
    fn from(s: &str) -> Self {
        TxId(s.to_string())
    }
}

/// A contract invocation as submitted by a client.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxRequest {
    pub function: String,
    pub args: Value,
    pub creator: OrgId,
    /// Key prefix the invocation touches, used for submit-time authorization
    /// and endorser selection.
    pub scope: Option<String>,
    /// Set by the ledger at submission.
    pub timestamp: Timestamp,
}

impl TxRequest {
    pub fn new(function: impl Into<String>, args: Value, creator: OrgId) -> Self {
        Self {
            function: function.into(),
            args,
            creator,
            scope: None,
            timestamp: Timestamp::ZERO,
        }
    }

    pub fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }
}

/// What a contract execution read and wrote. Reads record the version seen
/// (`None` for an absent key); range reads record the full result so that
/// phantoms are detected at validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RwSet {
    pub reads: BTreeMap<String, Option<Version>>,
    pub range_reads: BTreeMap<String, Vec<(String, Version)>>,
    pub writes: BTreeMap<String, Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContractEvent {
    pub name: String,
    pub payload: Value,
}

/// Result of executing a contract against one state snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Execution {
    pub contract_version: u32,
    pub rwset: RwSet,
    pub response: Value,
    pub events: Vec<ContractEvent>,
}

impl Execution {
    /// Digest endorsers sign: equal digests mean equal results.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("execution serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Placeholder attestation: the endorsing peer's id bound to the result
/// digest. No cryptographic identity is modelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Endorsement {
    pub peer_id: String,
    pub org_id: OrgId,
    pub signature: String,
}

impl Endorsement {
    pub fn sign(peer_id: &str, org_id: &OrgId, execution_digest: &str) -> Self {
        Self {
            peer_id: peer_id.to_string(),
            org_id: org_id.clone(),
            signature: signature(peer_id, execution_digest),
        }
    }

    pub fn verify(&self, execution_digest: &str) -> bool {
        self.signature == signature(&self.peer_id, execution_digest)
    }
}

fn signature(peer_id: &str, digest: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"endorse\0");
    h.update(peer_id.as_bytes());
    h.update(b"\0");
    h.update(digest.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub tx_id: TxId,
    pub request: TxRequest,
    pub execution: Execution,
    pub endorsements: Vec<Endorsement>,
    /// Number of peers asked to endorse; the policy is evaluated against it.
    pub endorsers_total: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxValidity {
    Valid,
    MvccConflict,
    EndorsementFailure,
}

impl fmt::Display for TxValidity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxValidity::Valid => "VALID",
            TxValidity::MvccConflict => "MVCC_CONFLICT",
            TxValidity::EndorsementFailure => "ENDORSEMENT_FAILURE",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn signatures_bind_peer_and_digest() {
        let e = Endorsement::sign("p0", &"ORG".into(), "abc");
        assert!(e.verify("abc"));
        assert!(!e.verify("abd"));
        let mut forged = e.clone();
        forged.peer_id = "p1".into();
        assert!(!forged.verify("abc"));
    }

    #[test]
    fn execution_digest_is_order_independent_for_maps() {
        let mut a = Execution {
            contract_version: 1,
            rwset: RwSet::default(),
            response: json!({"b": 1, "a": 2}),
            events: vec![],
        };
        a.rwset.writes.insert("x".into(), Some("1".into()));
        a.rwset.writes.insert("y".into(), None);
        let mut b = a.clone();
        b.response = json!({"a": 2, "b": 1});
        assert_eq!(a.digest(), b.digest());
        b.rwset.writes.insert("z".into(), None);
        assert_ne!(a.digest(), b.digest());
    }
}
