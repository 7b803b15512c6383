use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::access::{allowed, Endpoint};
use super::cache::{self, CacheEntry, MemoryCache, ReadCache};
use super::config::GatewayConfig;
use super::notify::{Channel, Notifier, Subscription, Trigger};
use super::users::{Role, UserAccount, UserDirectory};
use super::GatewayError;
use crate::chaincode::{
    self, keys, ChaincodeConfig, DisputeTargetArg, ShipmentRecord, COMPUTE_CA, COMPUTE_PAS,
    MANAGE_DISPUTE, FINALIZE_PA, PUT_DOCUMENT, PUT_EVENT,
};
use crate::claims::{self, ClaimAdvice, ClaimCategory, MatchCriterion, MatchLevel, Pass, PoLine};
use crate::edi::{
    parse_document, Bol, ContainerNo, DocumentKind, EdiDocument, LineRef, Money, OrgId,
};
use crate::events::{EventProcessor, TrackingEvent};
use crate::ledger::{
    Contract, Ledger, TimeMode, TxId, TxPhase, TxRequest, TxStatus, TxValidity, Version,
};
use crate::lifecycle::{aggregate_ca_state, AdviceState, Dispute, DisputeStatus, StateChange, Verdict};
use crate::payments::PaymentAdvice;
use crate::time::Timestamp;

/// One entry of the request audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditRecord {
    pub at: Timestamp,
    pub user_id: String,
    pub org_id: OrgId,
    pub action: String,
    pub status: u16,
    pub tx_id: Option<TxId>,
}

const AUDIT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    pub tx_id: TxId,
    pub response: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentReceipt {
    pub kind: DocumentKind,
    pub id: String,
    pub tx_id: TxId,
    /// `STORED`, or `UNCHANGED` for a repeated identical document.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ShipmentRequest {
    pub bol: Bol,
    pub container_no: ContainerNo,
    pub lines: Vec<LineRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventResult {
    pub event_id: String,
    pub status: String,
    pub tx_id: Option<TxId>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RaiseDisputeRequest {
    pub po_id: String,
    pub line_item_id: String,
    pub target: DisputeTargetArg,
    pub text: String,
    #[serde(default)]
    pub attachment_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CommentRequest {
    pub text: String,
    #[serde(default)]
    pub attachment_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ResolveRequest {
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SubscribeRequest {
    pub triggers: BTreeSet<Trigger>,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DisputeSummary {
    pub dispute_id: String,
    pub status: DisputeStatus,
    pub raised_by: String,
    pub reviewer_org: OrgId,
    pub comments: usize,
    pub raised_at: Timestamp,
    pub resolved_at: Option<Timestamp>,
}

impl From<&Dispute> for DisputeSummary {
    fn from(d: &Dispute) -> Self {
        Self {
            dispute_id: d.dispute_id.clone(),
            status: d.status,
            raised_by: format!("{}@{}", d.raised_by.user_id, d.raised_by.org_id),
            reviewer_org: d.reviewer_org.clone(),
            comments: d.comments.len(),
            raised_at: d.raised_at,
            resolved_at: d.resolved_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryView {
    pub category: ClaimCategory,
    pub state: AdviceState,
    /// Absent while the category is still being computed.
    pub amount: Option<Money>,
    pub quantity_delta: Option<i64>,
    pub issued_at: Option<Timestamp>,
    pub history: Vec<StateChange>,
    pub disputes: Vec<DisputeSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchingView {
    /// 2, 3 or 4 depending on the documents received.
    pub level: u8,
    pub violated: Vec<MatchCriterion>,
    pub descriptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClaimAdviceView {
    pub po_id: String,
    pub line_item_id: String,
    /// `PASS1_PENDING`, `PASS1_DONE` or `COMPLETE`.
    pub status: String,
    pub ca_id: Option<String>,
    pub aggregate_state: Option<AdviceState>,
    pub contract_version: Option<u32>,
    pub categories: Vec<CategoryView>,
    pub total_claim: Option<Money>,
    pub matching: Option<MatchingView>,
    /// Ledger version and value digest the view was built from.
    pub ledger_version: Option<Version>,
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaymentAdviceView {
    #[serde(flatten)]
    pub advice: PaymentAdvice,
    pub disputes: Vec<DisputeSummary>,
    pub ledger_version: Version,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaymentAdvicesView {
    pub po_id: String,
    pub line_item_id: String,
    /// `PENDING` until the first advice is issued, then `ISSUED`.
    pub status: String,
    pub advices: Vec<PaymentAdviceView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UpgradeReport {
    pub function: String,
    pub version: u32,
    pub effective_from: Timestamp,
    pub recomputed: Vec<LineRef>,
    pub regenerated: Vec<LineRef>,
    pub failures: Vec<String>,
}

pub(super) struct Leases {
    pub claims: Mutex<()>,
    pub payments: Mutex<()>,
    pub auto_approve: Mutex<()>,
}

pub struct Gateway {
    pub(super) ledger: Arc<Ledger>,
    pub(super) config: GatewayConfig,
    users: UserDirectory,
    pub(super) processor: Mutex<EventProcessor>,
    cache: Box<dyn ReadCache>,
    notifier: Notifier,
    pub(super) leases: Leases,
    audit: Mutex<Vec<AuditRecord>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub(super) fn decode<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, GatewayError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| GatewayError::BadRequest(format!("{}: {}", e.path(), e.inner())))
}

impl Gateway {
    pub fn new(ledger: Arc<Ledger>, config: GatewayConfig) -> Self {
        Self::with_cache(ledger, config, Box::new(MemoryCache::new()))
    }

    pub fn with_cache(ledger: Arc<Ledger>, config: GatewayConfig, cache: Box<dyn ReadCache>) -> Self {
        let notifier = Notifier::new(config.notify.clone());
        Self {
            ledger,
            config,
            users: UserDirectory::new(),
            processor: Mutex::new(EventProcessor::new()),
            cache,
            notifier,
            leases: Leases {
                claims: Mutex::new(()),
                payments: Mutex::new(()),
                auto_approve: Mutex::new(()),
            },
            audit: Mutex::new(Vec::new()),
        }
    }

    /// Builds the ledger (network of the configured users' orgs unless a
    /// topology file is given), installs the contracts and loads the users.
    pub fn from_config(config: GatewayConfig, time: TimeMode) -> Result<Self, GatewayError> {
        let users = config.users()?;
        let mut orgs: Vec<OrgId> = users
            .iter()
            .map(|u| u.org_id.clone())
            .filter(|o| o != &config.operator_org)
            .collect();
        orgs.sort();
        orgs.dedup();
        if orgs.is_empty() {
            orgs.push(config.operator_org.clone());
        }
        let topology = config.topology(&orgs)?;
        let registry = chaincode::registry(&ChaincodeConfig {
            operator: config.operator_org.clone(),
            ..ChaincodeConfig::default()
        });
        let ledger = Ledger::new(config.ledger_config(), topology, registry, time)?;
        let gw = Self::new(Arc::new(ledger), config);
        for u in users {
            gw.add_user_unchecked(u)?;
        }
        Ok(gw)
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn notifier(&self) -> &Notifier {
        &self.notifier
    }

    pub fn operator(&self) -> &OrgId {
        &self.config.operator_org
    }

    pub fn authenticate(&self, api_key: Option<&str>) -> Result<UserAccount, GatewayError> {
        api_key
            .and_then(|k| self.users.authenticate(k))
            .ok_or(GatewayError::Unauthenticated)
    }

    pub fn check(&self, user: &UserAccount, endpoint: Endpoint) -> Result<(), GatewayError> {
        if allowed(user.role, endpoint) {
            Ok(())
        } else {
            Err(GatewayError::Forbidden(format!("role {} may not call {endpoint:?}", user.role)))
        }
    }

    pub fn add_user_unchecked(&self, user: UserAccount) -> Result<(), GatewayError> {
        let is_op = user.org_id == self.config.operator_org;
        if (user.role == Role::Admin) != is_op {
            return Err(GatewayError::BadRequest(format!(
                "ADMIN accounts belong to {} and only they do",
                self.config.operator_org
            )));
        }
        self.users.add(user)
    }

    pub fn add_user(&self, caller: &UserAccount, user: UserAccount) -> Result<Value, GatewayError> {
        self.check(caller, Endpoint::PostUser)?;
        let id = user.user_id.clone();
        self.add_user_unchecked(user)?;
        Ok(json!({ "userId": id }))
    }

    pub fn record_audit(&self, user: &UserAccount, action: &str, status: u16, tx_id: Option<TxId>) {
        let mut a = lock(&self.audit);
        if a.len() >= AUDIT_CAP {
            a.remove(0);
        }
        a.push(AuditRecord {
            at: self.ledger.now(),
            user_id: user.user_id.clone(),
            org_id: user.org_id.clone(),
            action: action.to_string(),
            status,
            tx_id,
        });
    }

    pub fn audit_log(&self) -> Vec<AuditRecord> {
        lock(&self.audit).clone()
    }

    // ---- ledger plumbing

    /// Hands committed contract events to the notifier.
    pub fn pump_events(&self) -> usize {
        let events = self.ledger.take_events();
        self.notifier.dispatch(&events)
    }

    pub(super) fn invalidate(&self, prefixes: &[String]) {
        for p in prefixes {
            self.cache.invalidate_prefix(p);
        }
    }

    /// Submits a transaction and waits for it. Anything but a VALID commit
    /// is an error.
    pub(super) fn execute(&self, request: TxRequest) -> Result<TxStatus, GatewayError> {
        let st = self.ledger.submit_and_wait(request, self.config.tx_wait())?;
        self.pump_events();
        outcome(st)
    }

    fn read(&self, org: &OrgId, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        if !self.ledger.can_read(key, org) {
            return Err(GatewayError::Forbidden(format!("{org} may not read {key}")));
        }
        if let Some(e) = self.cache.get(key) {
            return Ok(Some(e));
        }
        let Some(v) = self.ledger.query_versioned(key, self.operator())? else {
            return Ok(None);
        };
        let entry = CacheEntry::new(v.value, v.version);
        self.cache.put(key, entry.clone());
        Ok(Some(entry))
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, org: &OrgId, key: &str) -> Result<Option<(T, CacheEntry)>, GatewayError> {
        match self.read(org, key)? {
            None => Ok(None),
            Some(e) => {
                let v = serde_json::from_str(&e.value)
                    .map_err(|err| GatewayError::Unavailable(format!("undecodable value at {key}: {err}")))?;
                Ok(Some((v, e)))
            }
        }
    }

    fn operator_get(&self, key: &str) -> Option<String> {
        self.ledger.query(key, self.operator()).ok().flatten()
    }

    /// Checks that the PO exists and `org` is scoped to the line item.
    fn line_access(&self, org: &OrgId, line: &LineRef) -> Result<(), GatewayError> {
        if self.operator_get(&keys::po(&line.po_id)).is_none() {
            return Err(GatewayError::NotFound(format!("purchase order {}", line.po_id)));
        }
        if self.operator_get(&keys::parties(line)).is_none() {
            return Err(GatewayError::NotFound(format!("line item {line}")));
        }
        if !self.ledger.can_read(&keys::line_prefix(line), org) {
            return Err(GatewayError::Forbidden(format!("{org} is not a party to {line}")));
        }
        Ok(())
    }

    pub fn verify_cache(&self) -> cache::VerifyReport {
        cache::verify(self.cache.as_ref(), &self.ledger)
    }

    pub fn tx_status(&self, caller: &UserAccount, tx_id: &str) -> Result<TxStatus, GatewayError> {
        self.check(caller, Endpoint::GetTx)?;
        let st = self.ledger.status(&TxId(tx_id.to_string()))?;
        if caller.role != Role::Admin && st.creator != caller.org_id {
            return Err(GatewayError::NotFound(format!("transaction {tx_id}")));
        }
        Ok(st)
    }

    // ---- documents

    pub fn ingest_document(&self, caller: &UserAccount, kind: &str, body: &[u8]) -> Result<DocumentReceipt, GatewayError> {
        let kind = DocumentKind::parse(kind)
            .ok_or_else(|| GatewayError::NotFound(format!("document kind {kind}")))?;
        self.check(caller, Endpoint::PostEdi(kind))?;
        let mut value: Value = decode(body)?;
        if let Value::Object(m) = &mut value {
            m.entry("kind").or_insert_with(|| json!(kind.as_str()));
        }
        let bytes = serde_json::to_vec(&value).expect("JSON values serialize");
        let doc = parse_document(&bytes, kind)?;
        let scope = match &doc {
            EdiDocument::PurchaseOrder(_) | EdiDocument::CarrierInvoice(_) => None,
            other => other.line_ref().map(|l| keys::line_prefix(&l)),
        };
        let mut req = TxRequest::new(PUT_DOCUMENT, json!({ "document": value }), caller.org_id.clone());
        if let Some(s) = scope {
            req = req.with_scope(s);
        }
        let st = self.execute(req)?;
        let resp = st.response.clone().unwrap_or(Value::Null);
        let status = resp["status"].as_str().unwrap_or("STORED").to_string();
        self.invalidate(&touched_by(&doc));
        if status == "STORED" {
            lock(&self.processor).document_ingested(&doc);
        }
        Ok(DocumentReceipt {
            kind,
            id: doc.id().to_string(),
            tx_id: st.tx_id,
            status,
        })
    }

    pub fn get_document(&self, caller: &UserAccount, kind: &str, id: &str) -> Result<Value, GatewayError> {
        self.check(caller, Endpoint::GetEdi)?;
        let kind = DocumentKind::parse(kind)
            .ok_or_else(|| GatewayError::NotFound(format!("document kind {kind}")))?;
        let key = self
            .operator_get(&keys::doc_index(kind, id))
            .ok_or_else(|| GatewayError::NotFound(format!("{kind} {id}")))?;
        let entry = self
            .read(&caller.org_id, &key)?
            .ok_or_else(|| GatewayError::NotFound(format!("{kind} {id}")))?;
        serde_json::from_str(&entry.value).map_err(|e| GatewayError::Unavailable(e.to_string()))
    }

    // ---- shipments and events

    pub fn register_shipment(&self, caller: &UserAccount, req: ShipmentRequest) -> Result<Receipt, GatewayError> {
        self.check(caller, Endpoint::PostShipment)?;
        let args = json!({
            "action": "REGISTER",
            "bol": req.bol,
            "containerNo": req.container_no,
            "lines": req.lines,
        });
        let st = self.execute(TxRequest::new(PUT_EVENT, args, caller.org_id.clone()))?;
        let mut touched = vec![keys::shipment_prefix(&req.bol, &req.container_no)];
        touched.extend(req.lines.iter().map(keys::line_prefix));
        self.invalidate(&touched);
        if let Err(e) = lock(&self.processor).register(req.bol.clone(), req.container_no.clone(), req.lines) {
            tracing::warn!(bol = %req.bol, container = %req.container_no, error = %e, "scheduler did not accept registration");
        }
        Ok(Receipt {
            tx_id: st.tx_id,
            response: st.response.unwrap_or(Value::Null),
        })
    }

    /// Records tracking events. Events of one container are applied in
    /// order; different containers go to the ledger side by side.
    pub fn ingest_events(&self, caller: &UserAccount, events: Vec<TrackingEvent>) -> Result<Vec<EventResult>, GatewayError> {
        self.check(caller, Endpoint::PostEvents)?;
        for (i, e) in events.iter().enumerate() {
            e.validate()
                .map_err(|err| GatewayError::BadRequest(format!("[{i}]: {err}")))?;
        }
        let mut queues: BTreeMap<(Bol, ContainerNo), Vec<usize>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            queues.entry((e.bol.clone(), e.container_no.clone())).or_default().push(i);
        }
        let mut results: Vec<Option<EventResult>> = vec![None; events.len()];
        let mut round = 0;
        loop {
            let batch: Vec<usize> = queues.values().filter_map(|q| q.get(round).copied()).collect();
            if batch.is_empty() {
                break;
            }
            let mut todo = batch;
            for _attempt in 0..8 {
                if todo.is_empty() {
                    break;
                }
                let mut submitted = Vec::new();
                for &i in &todo {
                    let e = &events[i];
                    let req = TxRequest::new(
                        PUT_EVENT,
                        json!({ "action": "TRACK", "event": e }),
                        self.config.operator_org.clone(),
                    )
                    .with_scope(keys::shipment_prefix(&e.bol, &e.container_no));
                    submitted.push((i, self.ledger.submit(req)?));
                }
                let mut retry = Vec::new();
                for (i, id) in submitted {
                    let st = self.ledger.wait(&id, self.config.tx_wait())?;
                    let e = &events[i];
                    match outcome(st.clone()) {
                        Ok(st) => {
                            let status = st.response.as_ref().and_then(|r| r["status"].as_str()).unwrap_or("RECORDED").to_string();
                            let mut p = lock(&self.processor);
                            if let Err(err) = p.ingest(e) {
                                tracing::warn!(event = %e.event_id, error = %err, "scheduler rejected event");
                            }
                            let mut touched = vec![keys::shipment_prefix(&e.bol, &e.container_no)];
                            if let Some(r) = p.registration(&e.bol, &e.container_no) {
                                touched.extend(r.lines.iter().map(keys::line_prefix));
                            }
                            drop(p);
                            self.invalidate(&touched);
                            results[i] = Some(EventResult {
                                event_id: e.event_id.clone(),
                                status,
                                tx_id: Some(st.tx_id),
                                error: None,
                            });
                        }
                        Err(GatewayError::Conflict(_)) if st.validity == Some(TxValidity::MvccConflict) => retry.push(i),
                        Err(err) => {
                            results[i] = Some(EventResult {
                                event_id: e.event_id.clone(),
                                status: "FAILED".into(),
                                tx_id: Some(st.tx_id),
                                error: Some(err.to_string()),
                            });
                        }
                    }
                }
                todo = retry;
            }
            for i in todo {
                results[i] = Some(EventResult {
                    event_id: events[i].event_id.clone(),
                    status: "FAILED".into(),
                    tx_id: None,
                    error: Some("repeated MVCC conflicts".into()),
                });
            }
            round += 1;
        }
        self.pump_events();
        Ok(results.into_iter().map(|r| r.expect("every event has a result")).collect())
    }

    pub fn shipments(&self, caller: &UserAccount) -> Result<Vec<ShipmentRecord>, GatewayError> {
        self.check(caller, Endpoint::GetShipments)?;
        Ok(self
            .ledger
            .scan("shipment/", &caller.org_id)
            .into_iter()
            .filter(|(k, _)| k.ends_with("/record"))
            .filter_map(|(_, v)| serde_json::from_str(&v).ok())
            .collect())
    }

    pub fn shipment_events(&self, caller: &UserAccount, bol: &str, container: &str) -> Result<Vec<TrackingEvent>, GatewayError> {
        self.check(caller, Endpoint::GetShipmentEvents)?;
        let (bol, c) = (Bol::from(bol), ContainerNo::from(container));
        if self.read(&caller.org_id, &keys::shipment(&bol, &c))?.is_none() {
            return Err(GatewayError::NotFound(format!("shipment {bol}/{c}")));
        }
        let mut out: Vec<TrackingEvent> = self
            .ledger
            .scan(&keys::shipment_events_prefix(&bol, &c), &caller.org_id)
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_str(&v).ok())
            .collect();
        out.sort_by(|a, b| (a.occurred_at, &a.event_id).cmp(&(b.occurred_at, &b.event_id)));
        Ok(out)
    }

    // ---- advices

    fn disputes_by_tag(&self, org: &OrgId, line: &LineRef) -> BTreeMap<String, Vec<DisputeSummary>> {
        let mut out: BTreeMap<String, Vec<DisputeSummary>> = BTreeMap::new();
        for (_, v) in self.ledger.scan(&keys::dispute_prefix(line), org) {
            if let Ok(d) = serde_json::from_str::<Dispute>(&v) {
                out.entry(d.target.tag()).or_default().push(DisputeSummary::from(&d));
            }
        }
        for list in out.values_mut() {
            list.sort_by_key(|d| d.raised_at);
        }
        out
    }

    pub fn claim_advice(&self, caller: &UserAccount, po: &str, li: &str) -> Result<ClaimAdviceView, GatewayError> {
        self.check(caller, Endpoint::GetClaimAdvice)?;
        let line = LineRef::new(po, li);
        self.line_access(&caller.org_id, &line)?;
        let org = &caller.org_id;
        let Some((ca, entry)) = self.read_json::<ClaimAdvice>(org, &keys::ca(&line))? else {
            return Ok(ClaimAdviceView {
                po_id: po.into(),
                line_item_id: li.into(),
                status: "PASS1_PENDING".into(),
                ca_id: None,
                aggregate_state: None,
                contract_version: None,
                categories: Vec::new(),
                total_claim: None,
                matching: None,
                ledger_version: None,
                digest: None,
            });
        };
        let mut disputes = self.disputes_by_tag(org, &line);
        let mut categories: Vec<CategoryView> = ca
            .claims
            .values()
            .map(|c| CategoryView {
                category: c.category,
                state: c.state,
                amount: Some(c.amount),
                quantity_delta: Some(c.quantity_delta),
                issued_at: c.issued_at,
                history: c.history.clone(),
                disputes: disputes.remove(&format!("ca/{}", c.category)).unwrap_or_default(),
            })
            .collect();
        if ca.pass == Pass::Pass1Done {
            categories.push(CategoryView {
                category: ClaimCategory::TransportDamage,
                state: AdviceState::Cip,
                amount: None,
                quantity_delta: None,
                issued_at: None,
                history: Vec::new(),
                disputes: Vec::new(),
            });
        }
        let status = match ca.pass {
            Pass::Pass1Done => "PASS1_DONE",
            Pass::Complete => "COMPLETE",
        };
        let total_claim = match ca.pass {
            Pass::Complete => claims::total_claim(&ca).ok(),
            Pass::Pass1Done => None,
        };
        let aggregate = match ca.pass {
            Pass::Complete => aggregate_ca_state(&ca),
            Pass::Pass1Done => AdviceState::Cip,
        };
        Ok(ClaimAdviceView {
            po_id: po.into(),
            line_item_id: li.into(),
            status: status.into(),
            ca_id: Some(ca.ca_id.clone()),
            aggregate_state: Some(aggregate),
            contract_version: Some(ca.contract_version),
            categories,
            total_claim,
            matching: self.matching(org, &line).ok().flatten(),
            ledger_version: Some(entry.version),
            digest: Some(entry.digest),
        })
    }

    fn doc(&self, org: &OrgId, key: &str, kind: DocumentKind) -> Result<Option<EdiDocument>, GatewayError> {
        match self.read(org, key)? {
            None => Ok(None),
            Some(e) => Ok(Some(parse_document(e.value.as_bytes(), kind)?)),
        }
    }

    fn matching(&self, org: &OrgId, line: &LineRef) -> Result<Option<MatchingView>, GatewayError> {
        let Some(EdiDocument::PurchaseOrder(po)) = self.doc(org, &keys::po(&line.po_id), DocumentKind::Po)? else {
            return Ok(None);
        };
        let Some(EdiDocument::CommercialInvoice(ci)) = self.doc(org, &keys::line_doc(line, DocumentKind::Ci), DocumentKind::Ci)? else {
            return Ok(None);
        };
        let da = match self.doc(org, &keys::line_doc(line, DocumentKind::Da), DocumentKind::Da)? {
            Some(EdiDocument::DespatchAdvice(d)) => Some(d),
            _ => None,
        };
        let ra = match self.doc(org, &keys::line_doc(line, DocumentKind::Ra), DocumentKind::Ra)? {
            Some(EdiDocument::ReceivingAdvice(r)) => Some(r),
            _ => None,
        };
        let level: u8 = match (&da, &ra) {
            (Some(_), Some(_)) => 4,
            (Some(_), None) => 3,
            _ => 2,
        };
        let pl = PoLine::of(&po, &line.line_item_id).map_err(|e| GatewayError::Precondition(e.to_string()))?;
        let violated = claims::matching_report(
            pl,
            da.as_ref(),
            ra.as_ref(),
            &ci,
            MatchLevel::try_from(level).expect("2..=4"),
        )
        .map_err(|e| GatewayError::Precondition(e.to_string()))?;
        Ok(Some(MatchingView {
            level,
            descriptions: violated.iter().map(|c| c.description().to_string()).collect(),
            violated,
        }))
    }

    pub fn payment_advices(&self, caller: &UserAccount, po: &str, li: &str) -> Result<PaymentAdvicesView, GatewayError> {
        self.check(caller, Endpoint::GetPaymentAdvices)?;
        let line = LineRef::new(po, li);
        self.line_access(&caller.org_id, &line)?;
        let org = &caller.org_id;
        let mut disputes = self.disputes_by_tag(org, &line);
        let mut advices = Vec::new();
        for (key, _) in self.ledger.scan(&keys::pa_prefix(&line), org) {
            if let Some((advice, entry)) = self.read_json::<PaymentAdvice>(org, &key)? {
                let tag = format!("pa/{}", advice.payee_id);
                advices.push(PaymentAdviceView {
                    advice,
                    disputes: disputes.remove(&tag).unwrap_or_default(),
                    ledger_version: entry.version,
                    digest: entry.digest,
                });
            }
        }
        Ok(PaymentAdvicesView {
            po_id: po.into(),
            line_item_id: li.into(),
            status: if advices.is_empty() { "PENDING" } else { "ISSUED" }.into(),
            advices,
        })
    }

    pub fn disputes(&self, caller: &UserAccount, po: &str, li: &str) -> Result<Vec<Dispute>, GatewayError> {
        self.check(caller, Endpoint::GetDisputes)?;
        let line = LineRef::new(po, li);
        self.line_access(&caller.org_id, &line)?;
        let mut out: Vec<Dispute> = self
            .ledger
            .scan(&keys::dispute_prefix(&line), &caller.org_id)
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_str(&v).ok())
            .collect();
        out.sort_by_key(|d| d.raised_at);
        Ok(out)
    }

    // ---- disputes and finalization

    fn dispute_line(&self, org: &OrgId, dispute_id: &str) -> Result<LineRef, GatewayError> {
        let key = self
            .operator_get(&keys::dispute_index(dispute_id))
            .ok_or_else(|| GatewayError::NotFound(format!("dispute {dispute_id}")))?;
        if !self.ledger.can_read(&key, org) {
            return Err(GatewayError::Forbidden(format!("{org} may not see dispute {dispute_id}")));
        }
        Ok(keys::parse_line(&key).expect("disputes live under li/"))
    }

    fn line_tx(&self, caller: &UserAccount, function: &str, args: Value, line: &LineRef) -> Result<Receipt, GatewayError> {
        let req = TxRequest::new(function, args, caller.org_id.clone()).with_scope(keys::line_prefix(line));
        let st = self.execute(req)?;
        self.invalidate(&[keys::line_prefix(line)]);
        Ok(Receipt {
            tx_id: st.tx_id,
            response: st.response.unwrap_or(Value::Null),
        })
    }

    pub fn raise_dispute(&self, caller: &UserAccount, req: RaiseDisputeRequest) -> Result<Receipt, GatewayError> {
        self.check(caller, Endpoint::PostDispute)?;
        let line = LineRef::new(req.po_id.clone(), req.line_item_id.clone());
        self.line_access(&caller.org_id, &line)?;
        let args = json!({
            "action": "RAISE",
            "userId": caller.user_id,
            "poId": req.po_id,
            "lineItemId": req.line_item_id,
            "target": req.target,
            "text": req.text,
            "attachmentDigest": req.attachment_digest,
        });
        self.line_tx(caller, MANAGE_DISPUTE, args, &line)
    }

    pub fn comment_dispute(&self, caller: &UserAccount, dispute_id: &str, req: CommentRequest) -> Result<Receipt, GatewayError> {
        self.check(caller, Endpoint::PostDisputeComment)?;
        let line = self.dispute_line(&caller.org_id, dispute_id)?;
        let args = json!({
            "action": "COMMENT",
            "userId": caller.user_id,
            "disputeId": dispute_id,
            "text": req.text,
            "attachmentDigest": req.attachment_digest,
        });
        self.line_tx(caller, MANAGE_DISPUTE, args, &line)
    }

    pub fn resolve_dispute(&self, caller: &UserAccount, dispute_id: &str, req: ResolveRequest) -> Result<Receipt, GatewayError> {
        self.check(caller, Endpoint::PostDisputeResolve)?;
        let line = self.dispute_line(&caller.org_id, dispute_id)?;
        let args = json!({
            "action": "RESOLVE",
            "userId": caller.user_id,
            "disputeId": dispute_id,
            "verdict": req.verdict,
        });
        self.line_tx(caller, MANAGE_DISPUTE, args, &line)
    }

    pub fn finalize_pa(&self, caller: &UserAccount, pa_id: &str) -> Result<Receipt, GatewayError> {
        self.check(caller, Endpoint::FinalizePa)?;
        let key = self
            .operator_get(&keys::pa_index(pa_id))
            .ok_or_else(|| GatewayError::NotFound(format!("payment advice {pa_id}")))?;
        if !self.ledger.can_read(&key, &caller.org_id) {
            return Err(GatewayError::Forbidden(format!("{} may not see {pa_id}", caller.org_id)));
        }
        let line = keys::parse_line(&key).expect("payment advices live under li/");
        let args = json!({ "paId": pa_id, "userId": caller.user_id });
        self.line_tx(caller, FINALIZE_PA, args, &line)
    }

    pub fn subscribe(&self, caller: &UserAccount, req: SubscribeRequest) -> Result<Subscription, GatewayError> {
        self.check(caller, Endpoint::PostSubscription)?;
        self.notifier
            .subscribe(&caller.user_id, &caller.org_id, req.triggers, req.channel)
    }

    // ---- contract upgrades

    /// Installs a new version of a contract function and brings existing
    /// advices in line with it: claim advices of goods shipped on or after
    /// `effective_from` are recomputed, and their payment advices
    /// regenerated.
    pub fn apply_contract_upgrade(
        &self,
        function: &str,
        contract: Arc<dyn Contract>,
        effective_from: Timestamp,
        approvals: &BTreeSet<OrgId>,
    ) -> Result<UpgradeReport, GatewayError> {
        let (info, tx) = self.ledger.upgrade_contract(function, contract, effective_from, approvals)?;
        outcome(self.ledger.wait(&tx, self.config.tx_wait())?)?;
        let mut report = UpgradeReport {
            function: function.to_string(),
            version: info.version,
            effective_from,
            recomputed: Vec::new(),
            regenerated: Vec::new(),
            failures: Vec::new(),
        };
        if function != COMPUTE_CA && function != COMPUTE_PAS {
            return Ok(report);
        }
        let op = self.operator().clone();
        let lines: Vec<LineRef> = self
            .ledger
            .scan("li/", &op)
            .into_iter()
            .filter(|(k, _)| k.ends_with("/shipped-at"))
            .filter(|(_, v)| serde_json::from_str::<Timestamp>(v).is_ok_and(|t| t >= effective_from))
            .filter_map(|(k, _)| keys::parse_line(&k))
            .collect();
        for line in lines {
            if function == COMPUTE_CA {
                if self.operator_get(&keys::ca(&line)).is_none() {
                    continue;
                }
                let args = json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "pass": "ONE", "recompute": true });
                match self.execute(TxRequest::new(COMPUTE_CA, args, op.clone()).with_scope(keys::line_prefix(&line))) {
                    Ok(_) => report.recomputed.push(line.clone()),
                    Err(e) => {
                        report.failures.push(format!("{line}: {e}"));
                        continue;
                    }
                }
            }
            if self.ledger.scan(&keys::pa_prefix(&line), &op).is_empty() {
                self.invalidate(&[keys::line_prefix(&line)]);
                continue;
            }
            let args = json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "regenerate": true });
            match self.execute(TxRequest::new(COMPUTE_PAS, args, op.clone()).with_scope(keys::line_prefix(&line))) {
                Ok(_) => report.regenerated.push(line.clone()),
                Err(e) => report.failures.push(format!("{line}: {e}")),
            }
            self.invalidate(&[keys::line_prefix(&line)]);
        }
        Ok(report)
    }

    /// Waits for queued webhook deliveries.
    pub fn flush_notifications(&self, max_wait: Duration) -> bool {
        self.notifier.flush(max_wait)
    }
}

/// VALID commits pass; contract refusals and invalid commits become errors.
pub(super) fn outcome(st: TxStatus) -> Result<TxStatus, GatewayError> {
    match (st.phase, st.validity) {
        (TxPhase::Committed, Some(TxValidity::Valid)) => Ok(st),
        (TxPhase::Committed, Some(TxValidity::MvccConflict)) => Err(GatewayError::Conflict(format!(
            "transaction {} was invalidated by a concurrent update; retry",
            st.tx_id
        ))),
        (TxPhase::Committed, _) => Err(GatewayError::Unavailable(format!(
            "transaction {} failed endorsement",
            st.tx_id
        ))),
        (TxPhase::Failed, _) => Err(st
            .error
            .map(GatewayError::from)
            .unwrap_or_else(|| GatewayError::Unavailable(format!("transaction {} failed", st.tx_id)))),
        _ => Err(GatewayError::Timeout(format!("transaction {} still {:?}", st.tx_id, st.phase))),
    }
}

/// Key prefixes a stored document may change.
fn touched_by(doc: &EdiDocument) -> Vec<String> {
    match doc {
        EdiDocument::PurchaseOrder(po) => vec![keys::po(&po.po_id), format!("li/{}/", po.po_id)],
        EdiDocument::CarrierInvoice(inv) => {
            let mut v = vec![
                keys::carrier_invoice(inv.invoice_id.as_str()),
                keys::shipment_prefix(&inv.bol, &inv.container_no),
            ];
            v.extend(inv.allocations.iter().map(|a| {
                keys::line_prefix(&LineRef {
                    po_id: a.po_id.clone(),
                    line_item_id: a.line_item_id.clone(),
                })
            }));
            v
        }
        other => other.line_ref().map(|l| keys::line_prefix(&l)).into_iter().collect(),
    }
}
