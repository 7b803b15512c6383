//! A simulated permissioned ledger with an endorse → order → validate →
//! commit pipeline.
//!
//! Clients [`Ledger::submit`] a [`TxRequest`] and get a transaction id back
//! at once. On each [`Ledger::tick`] queued requests are executed by the
//! selected endorsing peers against their committed state, handed to the
//! orderer's [`BlockCutter`], and every cut block is validated (endorsement
//! policy, then read-set versions) and applied by all peers. Queries only
//! ever see committed state and are filtered by the per-org scope records
//! kept in the state itself (see [`scope`]).

pub mod block;
pub mod contract;
pub mod endorse;
pub mod orderer;
pub mod peer;
pub mod scope;
pub mod state;
pub mod topology;
pub mod tx;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edi::OrgId;
use crate::time::{Clock, ManualClock, Timestamp};

pub use block::{verify_log, verify_records, Block, BlockLog, BlockRecord, IntegrityError, VerifyReport};
pub use contract::{
    decode_args, Contract, ContractError, ContractRegistry, RegistryError, TxContext, VersionInfo,
};
pub use endorse::{EndorseOutcome, EndorsementPolicy, Fault};
pub use orderer::{BlockCutter, CutterConfig};
pub use peer::{Peer, PeerConfig};
pub use state::{StateView, Version, VersionedValue, WorldState};
pub use topology::{LatencyDist, NetworkTopology, TopologyError};
pub use tx::{ContractEvent, Execution, RwSet, Transaction, TxId, TxRequest, TxValidity};

use endorse::Endorser;

/// Function name of the built-in contract that records upgrades on-ledger.
pub const UPGRADE_FUNCTION: &str = "recordContractUpgrade";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown contract function {0}")]
    UnknownFunction(String),
    #[error("organization {org} may not access {key}")]
    AccessDenied { org: OrgId, key: String },
    #[error("unknown transaction {0}")]
    UnknownTx(TxId),
    #[error("ledger unavailable")]
    Unavailable,
    #[error("transaction {0} did not complete in time")]
    Timeout(TxId),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerConfig {
    pub cutter: CutterConfig,
    /// Org that runs the platform services; may read every key.
    pub operator_org: OrgId,
    pub block_log: Option<PathBuf>,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            cutter: CutterConfig::default(),
            operator_org: OrgId::from("PLATFORM"),
            block_log: None,
        }
    }
}

/// Where the ledger takes time from. In virtual mode, waiting for a
/// transaction advances the manual clock to the next block deadline instead
/// of sleeping.
#[derive(Clone)]
pub enum TimeMode {
    Wall(Arc<dyn Clock>),
    Virtual(ManualClock),
}

impl TimeMode {
    fn now(&self) -> Timestamp {
        match self {
            TimeMode::Wall(c) => c.now(),
            TimeMode::Virtual(c) => c.now(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxPhase {
    Submitted,
    Endorsed,
    Ordered,
    Committed,
    Failed,
}

impl TxPhase {
    pub fn is_final(self) -> bool {
        matches!(self, TxPhase::Committed | TxPhase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxStatus {
    pub tx_id: TxId,
    pub function: String,
    pub creator: OrgId,
    pub phase: TxPhase,
    pub validity: Option<TxValidity>,
    pub block: Option<u64>,
    /// Contract refusal for `FAILED` transactions.
    pub error: Option<ContractError>,
    pub response: Option<Value>,
    pub submitted_at: Timestamp,
    pub committed_at: Option<Timestamp>,
}

impl TxStatus {
    pub fn is_valid(&self) -> bool {
        self.validity == Some(TxValidity::Valid)
    }
}

/// A contract event from a transaction committed as VALID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommittedEvent {
    pub tx_id: TxId,
    pub block: u64,
    pub creator: OrgId,
    pub event: ContractEvent,
}

struct Inner {
    config: LedgerConfig,
    topology: NetworkTopology,
    registry: ContractRegistry,
    peers: Vec<Peer>,
    faults: BTreeMap<String, Fault>,
    queue: VecDeque<(TxId, TxRequest)>,
    cutter: BlockCutter<Transaction>,
    statuses: HashMap<TxId, TxStatus>,
    seq: u64,
    log: Option<BlockLog>,
    records: Vec<BlockRecord>,
    events: Vec<CommittedEvent>,
    available: bool,
}

pub struct Ledger {
    inner: Mutex<Inner>,
    changed: Condvar,
    time: TimeMode,
}

struct UpgradeRecord;

impl Contract for UpgradeRecord {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let info: VersionInfo = decode_args(args)?;
        let key = format!("_contracts/{}/v{}", info.function, info.version);
        if ctx.get(&key).is_some() {
            return Err(ContractError::Conflict(format!("{key} already recorded")));
        }
        ctx.put_json(&key, &info);
        Ok(json!({ "key": key }))
    }
}

impl Ledger {
    pub fn new(
        config: LedgerConfig,
        topology: NetworkTopology,
        mut registry: ContractRegistry,
        time: TimeMode,
    ) -> Result<Self, LedgerError> {
        topology.validate()?;
        registry.register(UPGRADE_FUNCTION, Arc::new(UpgradeRecord));
        let peers = topology.peers.iter().cloned().map(Peer::new).collect();
        let log = config.block_log.as_ref().map(BlockLog::open).transpose()?;
        let cutter = BlockCutter::new(
            config.cutter.block_size,
            config.cutter.block_timeout.as_millis() as u64,
        );
        Ok(Self {
            inner: Mutex::new(Inner {
                config,
                topology,
                registry,
                peers,
                faults: BTreeMap::new(),
                queue: VecDeque::new(),
                cutter,
                statuses: HashMap::new(),
                seq: 0,
                log,
                records: Vec::new(),
                events: Vec::new(),
                available: true,
            }),
            changed: Condvar::new(),
            time,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn now(&self) -> Timestamp {
        self.time.now()
    }

    pub fn operator(&self) -> OrgId {
        self.lock().config.operator_org.clone()
    }

    pub fn topology(&self) -> NetworkTopology {
        self.lock().topology.clone()
    }

    pub fn cutter_config(&self) -> CutterConfig {
        self.lock().config.cutter
    }

    /// Queues a request for endorsement and returns its id immediately.
    pub fn submit(&self, request: TxRequest) -> Result<TxId, LedgerError> {
        let mut g = self.lock();
        let (tx_id, request) = g.admit(request, self.time.now())?;
        g.queue.push_back((tx_id.clone(), request));
        drop(g);
        self.changed.notify_all();
        Ok(tx_id)
    }

    /// Executes a request on its endorsers right away instead of queueing
    /// it. With [`Ledger::commit_batch`] this lets a caller do its own
    /// ordering, as the load harness does.
    pub fn endorse_now(&self, request: TxRequest) -> Result<(TxId, EndorseOutcome), LedgerError> {
        let now = self.time.now();
        let mut g = self.lock();
        let (tx_id, request) = g.admit(request, now)?;
        let outcome = g.endorse(&tx_id, &request)?;
        let st = g.statuses.get_mut(&tx_id).expect("status exists");
        match &outcome {
            EndorseOutcome::Rejected(err) => {
                st.phase = TxPhase::Failed;
                st.error = Some(err.clone());
                st.committed_at = Some(now);
            }
            EndorseOutcome::Endorsed { .. } => st.phase = TxPhase::Endorsed,
        }
        Ok((tx_id, outcome))
    }

    /// A copy of the committed chain and state running on `topology`
    /// (which must cover the same orgs) under `time`. Queued work,
    /// statuses, events and the block log are not carried over.
    pub fn fork(&self, topology: NetworkTopology, time: TimeMode) -> Result<Ledger, LedgerError> {
        topology.validate()?;
        let g = self.lock();
        let tip = &g.peers[0];
        let peers = topology.peers.iter().cloned().map(|c| tip.replica(c)).collect();
        let cutter = BlockCutter::new(
            g.config.cutter.block_size,
            g.config.cutter.block_timeout.as_millis() as u64,
        );
        let config = LedgerConfig {
            block_log: None,
            ..g.config.clone()
        };
        Ok(Ledger {
            inner: Mutex::new(Inner {
                config,
                topology,
                registry: g.registry.clone(),
                peers,
                faults: BTreeMap::new(),
                queue: VecDeque::new(),
                cutter,
                statuses: HashMap::new(),
                seq: g.seq,
                log: None,
                records: g.records.clone(),
                events: Vec::new(),
                available: true,
            }),
            changed: Condvar::new(),
            time,
        })
    }

    /// Peers that would endorse `request` against the current state.
    pub fn endorsing_peers(&self, request: &TxRequest) -> Vec<PeerConfig> {
        let g = self.lock();
        g.endorsers_for(request)
            .into_iter()
            .map(|i| g.peers[i].config.clone())
            .collect()
    }

    /// Commits `batch` as the next block, bypassing the cutter. Returns
    /// the validity of each transaction.
    pub fn commit_batch(&self, batch: Vec<Transaction>) -> Result<Vec<TxValidity>, LedgerError> {
        let now = self.time.now();
        let mut g = self.lock();
        g.commit(batch, now)?;
        let validity = g.records.last().map(|r| r.validity.clone()).unwrap_or_default();
        drop(g);
        self.changed.notify_all();
        Ok(validity)
    }

    /// Advances the pipeline to the current time. Returns the number of
    /// blocks committed.
    pub fn tick(&self) -> Result<usize, LedgerError> {
        let now = self.time.now();
        let mut g = self.lock();
        let mut committed = 0;
        while let Some((tx_id, request)) = g.queue.pop_front() {
            let outcome = g.endorse(&tx_id, &request)?;
            match outcome {
                EndorseOutcome::Rejected(err) => {
                    let st = g.statuses.get_mut(&tx_id).expect("status exists");
                    st.phase = TxPhase::Failed;
                    st.error = Some(err);
                    st.committed_at = Some(now);
                }
                EndorseOutcome::Endorsed { tx, .. } => {
                    g.statuses.get_mut(&tx_id).expect("status exists").phase = TxPhase::Endorsed;
                    if let Some(batch) = g.cutter.push(tx, now.as_millis()) {
                        g.commit(batch, now)?;
                        committed += 1;
                    }
                }
            }
        }
        if let Some(batch) = g.cutter.poll(now.as_millis()) {
            g.commit(batch, now)?;
            committed += 1;
        }
        drop(g);
        self.changed.notify_all();
        Ok(committed)
    }

    /// When the pending batch will be cut by timeout, if any.
    pub fn next_deadline(&self) -> Option<Timestamp> {
        self.lock().cutter.deadline().map(Timestamp)
    }

    fn idle(&self) -> bool {
        let g = self.lock();
        g.queue.is_empty() && g.cutter.pending() == 0
    }

    /// Blocks until `tx_id` is committed or failed. Virtual time jumps to
    /// block deadlines; wall time waits for them.
    pub fn wait(&self, tx_id: &TxId, max_wait: Duration) -> Result<TxStatus, LedgerError> {
        let start = Instant::now();
        let start_virtual = self.now();
        loop {
            self.tick()?;
            let st = self.status(tx_id)?;
            if st.phase.is_final() {
                return Ok(st);
            }
            match &self.time {
                TimeMode::Virtual(clock) => {
                    let now = clock.now();
                    if now.since(start_virtual) > max_wait {
                        return Err(LedgerError::Timeout(tx_id.clone()));
                    }
                    match self.next_deadline() {
                        Some(d) if d > now => clock.set(d),
                        Some(_) => {}
                        None => return Err(LedgerError::Timeout(tx_id.clone())),
                    }
                }
                TimeMode::Wall(clock) => {
                    if start.elapsed() > max_wait {
                        return Err(LedgerError::Timeout(tx_id.clone()));
                    }
                    let now = clock.now();
                    let nap = self
                        .next_deadline()
                        .map(|d| d.since(now))
                        .unwrap_or(Duration::from_millis(10))
                        .clamp(Duration::from_millis(1), Duration::from_millis(50));
                    let g = self.lock();
                    let _ = self.changed.wait_timeout(g, nap);
                }
            }
        }
    }

    pub fn submit_and_wait(&self, request: TxRequest, max_wait: Duration) -> Result<TxStatus, LedgerError> {
        let id = self.submit(request)?;
        self.wait(&id, max_wait)
    }

    /// Drives the pipeline until nothing is queued or pending.
    pub fn settle(&self) -> Result<(), LedgerError> {
        loop {
            self.tick()?;
            if self.idle() {
                return Ok(());
            }
            match &self.time {
                TimeMode::Virtual(clock) => {
                    if let Some(d) = self.next_deadline() {
                        if d > clock.now() {
                            clock.set(d);
                        }
                    }
                }
                TimeMode::Wall(_) => std::thread::sleep(Duration::from_millis(5)),
            }
        }
    }

    pub fn status(&self, tx_id: &TxId) -> Result<TxStatus, LedgerError> {
        self.lock()
            .statuses
            .get(tx_id)
            .cloned()
            .ok_or_else(|| LedgerError::UnknownTx(tx_id.clone()))
    }

    pub fn can_read(&self, key: &str, org: &OrgId) -> bool {
        let g = self.lock();
        scope::can_read(g.peers[0].state(), key, org, &g.config.operator_org)
    }

    /// Committed value of `key` as seen by `org`. Out-of-scope keys are an
    /// access error, never silently absent.
    pub fn query(&self, key: &str, org: &OrgId) -> Result<Option<String>, LedgerError> {
        let g = self.lock();
        let state = g.peer_for(org).state();
        if !scope::can_read(state, key, org, &g.config.operator_org) {
            return Err(LedgerError::AccessDenied {
                org: org.clone(),
                key: key.to_string(),
            });
        }
        Ok(state.get(key).map(|v| v.value.clone()))
    }

    pub fn query_versioned(&self, key: &str, org: &OrgId) -> Result<Option<VersionedValue>, LedgerError> {
        let g = self.lock();
        let state = g.peer_for(org).state();
        if !scope::can_read(state, key, org, &g.config.operator_org) {
            return Err(LedgerError::AccessDenied {
                org: org.clone(),
                key: key.to_string(),
            });
        }
        Ok(state.get(key).cloned())
    }

    /// Like [`Ledger::query`] with JSON decoding; undecodable values are
    /// reported as absent.
    pub fn query_json<T: DeserializeOwned>(&self, key: &str, org: &OrgId) -> Result<Option<T>, LedgerError> {
        Ok(self
            .query(key, org)?
            .and_then(|s| serde_json::from_str(&s).ok()))
    }

    /// Entries under `prefix` that `org` may read.
    pub fn scan(&self, prefix: &str, org: &OrgId) -> Vec<(String, String)> {
        let g = self.lock();
        let state = g.peer_for(org).state();
        state
            .scan(prefix)
            .into_iter()
            .filter(|(k, _)| scope::can_read(state, k, org, &g.config.operator_org))
            .map(|(k, v)| (k.to_string(), v.value.clone()))
            .collect()
    }

    pub fn height(&self) -> u64 {
        self.lock().peers[0].height()
    }

    pub fn state_digest(&self) -> String {
        self.lock().peers[0].state_digest()
    }

    /// State digest of every peer, keyed by peer id.
    pub fn peer_digests(&self) -> BTreeMap<String, String> {
        self.lock()
            .peers
            .iter()
            .map(|p| (p.config.peer_id.clone(), p.state_digest()))
            .collect()
    }

    pub fn records(&self) -> Vec<BlockRecord> {
        self.lock().records.clone()
    }

    pub fn take_events(&self) -> Vec<CommittedEvent> {
        std::mem::take(&mut self.lock().events)
    }

    pub fn set_fault(&self, peer_id: &str, fault: Option<Fault>) {
        let mut g = self.lock();
        match fault {
            Some(f) => g.faults.insert(peer_id.to_string(), f),
            None => g.faults.remove(peer_id),
        };
    }

    /// Simulates an outage: submissions fail with [`LedgerError::Unavailable`].
    pub fn set_available(&self, available: bool) {
        self.lock().available = available;
    }

    pub fn contract_versions(&self, function: &str) -> Vec<VersionInfo> {
        self.lock().registry.versions(function)
    }

    /// Installs a new version of `function` effective from `effective_from`.
    /// Every org in the network must approve. The upgrade is recorded by a
    /// ledger transaction whose id is returned.
    pub fn upgrade_contract(
        &self,
        function: &str,
        contract: Arc<dyn Contract>,
        effective_from: Timestamp,
        approvals: &BTreeSet<OrgId>,
    ) -> Result<(VersionInfo, TxId), LedgerError> {
        let (info, operator) = {
            let mut g = self.lock();
            let parties = g.topology.orgs();
            let info = g
                .registry
                .upgrade(function, contract, effective_from, approvals, &parties)?;
            (info, g.config.operator_org.clone())
        };
        let args = serde_json::to_value(&info).expect("version info serializes");
        let tx = self.submit(TxRequest::new(UPGRADE_FUNCTION, args, operator))?;
        Ok((info, tx))
    }
}

impl Inner {
    /// Checks a request against availability, the registry and scope, and
    /// records it as submitted at `now`.
    fn admit(&mut self, mut request: TxRequest, now: Timestamp) -> Result<(TxId, TxRequest), LedgerError> {
        if !self.available {
            return Err(LedgerError::Unavailable);
        }
        if !self.registry.contains(&request.function) {
            return Err(LedgerError::UnknownFunction(request.function));
        }
        if let Some(prefix) = &request.scope {
            if request.creator != self.config.operator_org {
                if let Some(orgs) = scope::readers(self.peers[0].state(), prefix) {
                    if !orgs.contains(&request.creator) {
                        return Err(LedgerError::AccessDenied {
                            org: request.creator,
                            key: prefix.clone(),
                        });
                    }
                }
            }
        }
        request.timestamp = now;
        self.seq += 1;
        let tx_id = make_tx_id(self.seq, &request);
        self.statuses.insert(
            tx_id.clone(),
            TxStatus {
                tx_id: tx_id.clone(),
                function: request.function.clone(),
                creator: request.creator.clone(),
                phase: TxPhase::Submitted,
                validity: None,
                block: None,
                error: None,
                response: None,
                submitted_at: request.timestamp,
                committed_at: None,
            },
        );
        Ok((tx_id, request))
    }

    fn peer_for(&self, org: &OrgId) -> &Peer {
        self.peers
            .iter()
            .find(|p| &p.config.org_id == org)
            .unwrap_or(&self.peers[0])
    }

    /// Endorsing peers of the orgs scoped to the request, or every endorser
    /// when the request has no scope yet.
    fn endorsers_for(&self, request: &TxRequest) -> Vec<usize> {
        let all: Vec<usize> = (0..self.peers.len())
            .filter(|&i| self.peers[i].config.endorser)
            .collect();
        let scoped = request
            .scope
            .as_deref()
            .and_then(|p| scope::readers(self.peers[0].state(), p));
        match scoped {
            Some(orgs) => {
                let picked: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&i| orgs.contains(&self.peers[i].config.org_id))
                    .collect();
                if picked.is_empty() {
                    all
                } else {
                    picked
                }
            }
            None => all,
        }
    }

    fn endorse(&self, tx_id: &TxId, request: &TxRequest) -> Result<EndorseOutcome, LedgerError> {
        let endorsers: Vec<Endorser> = self
            .endorsers_for(request)
            .into_iter()
            .map(|i| {
                let p = &self.peers[i];
                Endorser {
                    config: &p.config,
                    state: p.state(),
                    fault: self.faults.get(&p.config.peer_id).copied(),
                }
            })
            .collect();
        Ok(endorse::endorse(
            &endorsers,
            &self.registry,
            tx_id,
            request,
            self.topology.endorsement_policy,
        )?)
    }

    fn commit(&mut self, batch: Vec<Transaction>, now: Timestamp) -> Result<(), LedgerError> {
        for tx in &batch {
            if let Some(st) = self.statuses.get_mut(&tx.tx_id) {
                st.phase = TxPhase::Ordered;
            }
        }
        let number = self.peers[0].height();
        let prev = self.peers[0].last_hash().to_string();
        let block = Block::new(number, prev, now, batch);
        let policy = self.topology.endorsement_policy;
        let mut validity: Option<Vec<TxValidity>> = None;
        for peer in &mut self.peers {
            let v = peer.validate_and_commit(&block, policy)?;
            match &validity {
                None => validity = Some(v),
                Some(first) if *first != v => {
                    return Err(IntegrityError::ValidityMismatch {
                        number,
                        recorded: first.clone(),
                        replayed: v,
                    }
                    .into())
                }
                Some(_) => {}
            }
        }
        let validity = validity.unwrap_or_default();
        let record = BlockRecord {
            state_digest: self.peers[0].state_digest(),
            validity: validity.clone(),
            block,
        };
        if let Some(log) = &mut self.log {
            log.append(&record)?;
        }
        for (tx, v) in record.block.transactions.iter().zip(&validity) {
            if let Some(st) = self.statuses.get_mut(&tx.tx_id) {
                st.phase = TxPhase::Committed;
                st.validity = Some(*v);
                st.block = Some(number);
                st.committed_at = Some(now);
                st.response = Some(tx.execution.response.clone());
            }
            if *v == TxValidity::Valid {
                for e in &tx.execution.events {
                    self.events.push(CommittedEvent {
                        tx_id: tx.tx_id.clone(),
                        block: number,
                        creator: tx.request.creator.clone(),
                        event: e.clone(),
                    });
                }
            }
        }
        self.records.push(record);
        Ok(())
    }
}

fn make_tx_id(seq: u64, request: &TxRequest) -> TxId {
    let mut h = Sha256::new();
    h.update(seq.to_be_bytes());
    h.update(serde_json::to_vec(request).expect("requests serialize"));
    TxId(hex::encode(&h.finalize()[..12]))
}

#[cfg(test)]
mod tests;
