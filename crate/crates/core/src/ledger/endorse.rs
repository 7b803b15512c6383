use serde::{Deserialize, Serialize};
use serde_json::json;

use super::contract::{ContractError, ContractRegistry, RegistryError};
use super::peer::PeerConfig;
use super::state::StateView;
use super::tx::{Endorsement, Execution, Transaction, TxId, TxRequest};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndorsementPolicy {
    /// More than half of the selected endorsers must return the same result.
    #[default]
    Majority,
}

impl EndorsementPolicy {
    pub fn satisfied(self, agreeing: u32, total: u32) -> bool {
        match self {
            EndorsementPolicy::Majority => total > 0 && agreeing * 2 > total,
        }
    }
}

/// Injected misbehaviour for an endorsing peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fault {
    /// Returns a result that differs from every honest peer's.
    Divergent,
}

pub struct Endorser<'a> {
    pub config: &'a PeerConfig,
    pub state: &'a dyn StateView,
    pub fault: Option<Fault>,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndorseOutcome {
    /// A transaction ready for ordering. Whether its endorsements satisfy
    /// the policy is decided again at validation.
    Endorsed { tx: Transaction, policy_met: bool },
    /// The contract itself refused the request.
    Rejected(ContractError),
}

fn corrupt(mut e: Execution, peer: &str) -> Execution {
    e.response = json!({ "divergent": peer });
    e
}

/// Executes `request` on every endorser and keeps the largest group of
/// identical results.
pub fn endorse(
    endorsers: &[Endorser<'_>],
    registry: &ContractRegistry,
    tx_id: &TxId,
    request: &TxRequest,
    policy: EndorsementPolicy,
) -> Result<EndorseOutcome, RegistryError> {
    let mut groups: Vec<(Result<Execution, ContractError>, Vec<&PeerConfig>)> = Vec::new();
    for e in endorsers {
        let mut result = registry.execute(e.state, request, tx_id)?;
        if e.fault == Some(Fault::Divergent) {
            result = result.map(|x| corrupt(x, &e.config.peer_id));
        }
        match groups.iter_mut().find(|(r, _)| *r == result) {
            Some((_, members)) => members.push(e.config),
            None => groups.push((result, vec![e.config])),
        }
    }
    let total = endorsers.len() as u32;
    // largest group; earliest on ties so the outcome is deterministic
    let best = groups
        .into_iter()
        .enumerate()
        .max_by_key(|(i, (_, m))| (m.len(), std::cmp::Reverse(*i)))
        .map(|(_, g)| g);
    let Some((result, members)) = best else {
        return Ok(EndorseOutcome::Rejected(ContractError::Precondition(
            "no endorsing peers available".into(),
        )));
    };
    match result {
        Err(e) => Ok(EndorseOutcome::Rejected(e)),
        Ok(execution) => {
            let digest = execution.digest();
            let endorsements = members
                .iter()
                .map(|p| Endorsement::sign(&p.peer_id, &p.org_id, &digest))
                .collect::<Vec<_>>();
            let policy_met = policy.satisfied(endorsements.len() as u32, total);
            Ok(EndorseOutcome::Endorsed {
                tx: Transaction {
                    tx_id: tx_id.clone(),
                    request: request.clone(),
                    execution,
                    endorsements,
                    endorsers_total: total,
                },
                policy_met,
            })
        }
    }
}
