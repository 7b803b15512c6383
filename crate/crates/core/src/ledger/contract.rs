use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::state::StateView;
use super::tx::{ContractEvent, Execution, RwSet, TxId, TxRequest};
use crate::edi::OrgId;
use crate::time::Timestamp;

/// Business-level failure of a contract invocation. Deterministic: every
/// honest endorser returns the same error for the same snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "message", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContractError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl ContractError {
    pub fn bad(msg: impl ToString) -> Self {
        ContractError::BadRequest(msg.to_string())
    }
}

/// Execution context handed to a contract: a snapshot of committed state
/// plus the read/write set being recorded.
pub struct TxContext<'a> {
    state: &'a dyn StateView,
    request: &'a TxRequest,
    tx_id: &'a TxId,
    version: u32,
    rwset: RwSet,
    events: Vec<ContractEvent>,
}

impl<'a> TxContext<'a> {
    pub fn new(state: &'a dyn StateView, request: &'a TxRequest, tx_id: &'a TxId) -> Self {
        Self {
            state,
            request,
            tx_id,
            version: 0,
            rwset: RwSet::default(),
            events: Vec::new(),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.request.timestamp
    }

    pub fn creator(&self) -> &OrgId {
        &self.request.creator
    }

    pub fn tx_id(&self) -> &TxId {
        self.tx_id
    }

    /// Version of the contract function being executed.
    pub fn contract_version(&self) -> u32 {
        self.version
    }

    fn record_read(&mut self, key: &str) {
        if !self.rwset.reads.contains_key(key) {
            let v = self.state.get(key).map(|vv| vv.version);
            self.rwset.reads.insert(key.to_string(), v);
        }
    }

    /// Reads a key, seeing this transaction's own earlier writes.
    pub fn get(&mut self, key: &str) -> Option<String> {
        if let Some(w) = self.rwset.writes.get(key) {
            return w.clone();
        }
        self.record_read(key);
        self.state.get(key).map(|vv| vv.value.clone())
    }

    pub fn get_json<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ContractError> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => serde_json::from_str(&s)
                .map(Some)
                .map_err(|e| ContractError::Precondition(format!("corrupt value at {key}: {e}"))),
        }
    }

    /// Writes a key. The key's current version is recorded as read, so two
    /// transactions writing the same key from the same snapshot conflict.
    pub fn put(&mut self, key: &str, value: String) {
        self.record_read(key);
        self.rwset.writes.insert(key.to_string(), Some(value));
    }

    pub fn put_json<T: Serialize>(&mut self, key: &str, value: &T) {
        let s = serde_json::to_string(value).expect("contract values serialize");
        self.put(key, s);
    }

    pub fn delete(&mut self, key: &str) {
        self.record_read(key);
        self.rwset.writes.insert(key.to_string(), None);
    }

    /// Committed entries under `prefix` merged with this transaction's own
    /// writes. The committed result is recorded for phantom detection.
    pub fn scan(&mut self, prefix: &str) -> Vec<(String, String)> {
        let committed = self.state.scan(prefix);
        self.rwset.range_reads.insert(
            prefix.to_string(),
            committed
                .iter()
                .map(|(k, v)| (k.to_string(), v.version))
                .collect(),
        );
        let mut merged: BTreeMap<String, String> = committed
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.value.clone()))
            .collect();
        for (k, w) in self.rwset.writes.range(prefix.to_string()..) {
            if !k.starts_with(prefix) {
                break;
            }
            match w {
                Some(v) => merged.insert(k.clone(), v.clone()),
                None => merged.remove(k),
            };
        }
        merged.into_iter().collect()
    }

    pub fn emit(&mut self, name: impl Into<String>, payload: Value) {
        self.events.push(ContractEvent {
            name: name.into(),
            payload,
        });
    }

    fn finish(self, response: Value) -> Execution {
        Execution {
            contract_version: self.version,
            rwset: self.rwset,
            response,
            events: self.events,
        }
    }
}

/// A deterministic contract function.
pub trait Contract: Send + Sync {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError>;

    /// The date that selects which registered version of this function
    /// runs. Defaults to the transaction timestamp.
    fn as_of(&self, ctx: &mut TxContext<'_>, _args: &Value) -> Timestamp {
        ctx.now()
    }
}

/// Decodes contract arguments with a field path in the error.
pub fn decode_args<T: DeserializeOwned>(args: &Value) -> Result<T, ContractError> {
    serde_path_to_error::deserialize(args.clone())
        .map_err(|e| ContractError::BadRequest(format!("{}: {}", e.path(), e.inner())))
}

#[derive(Clone)]
pub struct ContractVersion {
    pub version: u32,
    pub effective_from: Timestamp,
    pub approvals: BTreeSet<OrgId>,
    pub contract: Arc<dyn Contract>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown contract function {0}")]
    UnknownFunction(String),
    #[error("upgrade of {function} lacks approval from {missing:?}")]
    MissingApprovals {
        function: String,
        missing: Vec<OrgId>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "camelCase")]
pub struct VersionInfo {
    pub function: String,
    pub version: u32,
    pub effective_from: Timestamp,
    pub approvals: BTreeSet<OrgId>,
}

/// Installed contract functions and their versions.
#[derive(Clone, Default)]
pub struct ContractRegistry {
    functions: BTreeMap<String, Vec<ContractVersion>>,
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs version 1 of `name`, effective from the beginning of time.
    pub fn register(&mut self, name: &str, contract: Arc<dyn Contract>) {
        self.functions.insert(
            name.to_string(),
            vec![ContractVersion {
                version: 1,
                effective_from: Timestamp::ZERO,
                approvals: BTreeSet::new(),
                contract,
            }],
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn functions(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    /// Registers a new version that applies to everything dated on or after
    /// `effective_from`. Every org in `parties` must approve.
    pub fn upgrade(
        &mut self,
        name: &str,
        contract: Arc<dyn Contract>,
        effective_from: Timestamp,
        approvals: &BTreeSet<OrgId>,
        parties: &BTreeSet<OrgId>,
    ) -> Result<VersionInfo, RegistryError> {
        let versions = self
            .functions
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnknownFunction(name.to_string()))?;
        let missing: Vec<OrgId> = parties.difference(approvals).cloned().collect();
        if !missing.is_empty() {
            return Err(RegistryError::MissingApprovals {
                function: name.to_string(),
                missing,
            });
        }
        let version = versions.last().map_or(1, |v| v.version + 1);
        versions.push(ContractVersion {
            version,
            effective_from,
            approvals: approvals.clone(),
            contract,
        });
        Ok(VersionInfo {
            function: name.to_string(),
            version,
            effective_from,
            approvals: approvals.clone(),
        })
    }

    pub fn versions(&self, name: &str) -> Vec<VersionInfo> {
        self.functions
            .get(name)
            .into_iter()
            .flatten()
            .map(|v| VersionInfo {
                function: name.to_string(),
                version: v.version,
                effective_from: v.effective_from,
                approvals: v.approvals.clone(),
            })
            .collect()
    }

    /// The newest version whose effective date is not after `as_of`.
    pub fn select(&self, name: &str, as_of: Timestamp) -> Option<&ContractVersion> {
        self.functions
            .get(name)?
            .iter()
            .filter(|v| v.effective_from <= as_of)
            .max_by_key(|v| (v.effective_from, v.version))
    }

    /// Runs `request` against `state` without side effects on the state.
    pub fn execute(
        &self,
        state: &dyn StateView,
        request: &TxRequest,
        tx_id: &TxId,
    ) -> Result<Result<Execution, ContractError>, RegistryError> {
        let versions = self
            .functions
            .get(&request.function)
            .ok_or_else(|| RegistryError::UnknownFunction(request.function.clone()))?;
        let latest = versions.last().expect("registered functions have a version");
        let mut ctx = TxContext::new(state, request, tx_id);
        let as_of = latest.contract.as_of(&mut ctx, &request.args);
        let chosen = self
            .select(&request.function, as_of)
            .unwrap_or(&versions[0]);
        ctx.version = chosen.version;
        Ok(chosen
            .contract
            .invoke(&mut ctx, &request.args)
            .map(|response| ctx.finish(response)))
    }
}
