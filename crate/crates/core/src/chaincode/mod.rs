//! Contract functions of the accounts-payable network.
//!
//! | function         | effect                                                  |
//! |------------------|---------------------------------------------------------|
//! | `putDocument`    | stores an EDI document and maintains scopes and parties |
//! | `putEvent`       | registers a container or records a tracking event       |
//! | `computeCA`      | claim advice pass 1, pass 2 or both; recomputation      |
//! | `computePAs`     | payment advices for every payee of a line item          |
//! | `manageDispute`  | raise, comment on and resolve disputes                  |
//! | `finalizePA`     | shipper sign-off on a payment advice                    |
//! | `autoApproveCAs` | moves overdue OPEN claims to AA                         |
//!
//! Every function is deterministic over the state snapshot and the request
//! timestamp. Notifications are emitted as contract events whose payload
//! carries the `scope` (orgs allowed to see it).

mod advices;
mod disputes;
mod documents;
pub mod keys;
mod shipments;


use std::collections::BTreeSet;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub use advices::{ClaimPolicy, ComputeCaArgs, ComputePasArgs, PassSelector, StandardClaims};
pub use disputes::{DisputeArgs, DisputeTargetArg, FinalizeArgs, AutoApproveArgs};
pub use documents::PutDocumentArgs;
pub use shipments::{PutEventArgs, ShipmentRecord};

use crate::claims::ClaimsError;
use crate::edi::{parse_document, DocumentKind, EdiDocument, LineRef, OrgId, PoId, PurchaseOrder};
use crate::ledger::contract::{ContractError, ContractRegistry, TxContext};
use crate::ledger::scope::scope_key;
use crate::lifecycle::{LifecycleError, LineParties};
use crate::payments::{DamageRouting, PaymentsError, RouteToPacker};

pub const PUT_DOCUMENT: &str = "putDocument";
pub const PUT_EVENT: &str = "putEvent";
pub const COMPUTE_CA: &str = "computeCA";
pub const COMPUTE_PAS: &str = "computePAs";
pub const MANAGE_DISPUTE: &str = "manageDispute";
pub const FINALIZE_PA: &str = "finalizePA";
pub const AUTO_APPROVE_CAS: &str = "autoApproveCAs";

pub const FUNCTIONS: [&str; 7] = [
    PUT_DOCUMENT,
    PUT_EVENT,
    COMPUTE_CA,
    COMPUTE_PAS,
    MANAGE_DISPUTE,
    FINALIZE_PA,
    AUTO_APPROVE_CAS,
];

/// Names of the notification-bearing contract events.
pub mod event {
    pub const CA_ISSUED: &str = "CA_ISSUED";
    pub const CA_RECOMPUTED: &str = "CA_RECOMPUTED";
    pub const PA_ISSUED: &str = "PA_ISSUED";
    pub const PA_REVISED: &str = "PA_REVISED";
    pub const DISPUTE_RAISED: &str = "DISPUTE_RAISED";
    pub const DISPUTE_COMMENTED: &str = "DISPUTE_COMMENTED";
    pub const DISPUTE_RESOLVED: &str = "DISPUTE_RESOLVED";
    pub const AUTO_APPROVED: &str = "AUTO_APPROVED";
    pub const FINALIZED: &str = "FINALIZED";
    pub const DOCUMENT_STORED: &str = "DOCUMENT_STORED";
    pub const SHIPMENT_EVENT: &str = "SHIPMENT_EVENT";
}

#[derive(Clone)]
pub struct ChaincodeConfig {
    /// Org whose transactions (cron jobs, event feed) are trusted.
    pub operator: OrgId,
    pub routing: Arc<dyn DamageRouting>,
    pub claims: Arc<dyn ClaimPolicy>,
}

impl Default for ChaincodeConfig {
    fn default() -> Self {
        Self {
            operator: OrgId::from("PLATFORM"),
            routing: Arc::new(RouteToPacker),
            claims: Arc::new(StandardClaims),
        }
    }
}

/// Registers every function of the network at version 1.
pub fn install(registry: &mut ContractRegistry, config: &ChaincodeConfig) {
    let op = config.operator.clone();
    registry.register(PUT_DOCUMENT, Arc::new(documents::PutDocument { operator: op.clone() }));
    registry.register(PUT_EVENT, Arc::new(shipments::PutEvent { operator: op.clone() }));
    registry.register(
        COMPUTE_CA,
        Arc::new(advices::ComputeCa {
            operator: op.clone(),
            policy: config.claims.clone(),
        }),
    );
    registry.register(
        COMPUTE_PAS,
        Arc::new(advices::ComputePas {
            operator: op.clone(),
            routing: config.routing.clone(),
        }),
    );
    registry.register(MANAGE_DISPUTE, Arc::new(disputes::ManageDispute));
    registry.register(FINALIZE_PA, Arc::new(disputes::FinalizePa));
    registry.register(AUTO_APPROVE_CAS, Arc::new(disputes::AutoApproveCas { operator: op }));
}

pub fn registry(config: &ChaincodeConfig) -> ContractRegistry {
    let mut r = ContractRegistry::new();
    install(&mut r, config);
    r
}

/// A `computeCA` contract built around a different claim policy, for use
/// with [`crate::ledger::Ledger::upgrade_contract`].
pub fn compute_ca_with(operator: OrgId, policy: Arc<dyn ClaimPolicy>) -> Arc<dyn crate::ledger::Contract> {
    Arc::new(advices::ComputeCa { operator, policy })
}

impl From<LifecycleError> for ContractError {
    fn from(e: LifecycleError) -> Self {
        let msg = e.to_string();
        match e {
            LifecycleError::Forbidden { .. } | LifecycleError::Unauthorized(_) => {
                ContractError::Forbidden(msg)
            }
            LifecycleError::DuplicateDispute(_) => ContractError::Conflict(msg),
            LifecycleError::UnknownCategory(_) => ContractError::NotFound(msg),
            LifecycleError::TargetMismatch(_) | LifecycleError::InvalidConfig => {
                ContractError::BadRequest(msg)
            }
            LifecycleError::InvalidTransition { .. }
            | LifecycleError::Finalized(_)
            | LifecycleError::DisputeClosed(_)
            | LifecycleError::OpenDispute { .. } => ContractError::Precondition(msg),
        }
    }
}

impl From<ClaimsError> for ContractError {
    fn from(e: ClaimsError) -> Self {
        let msg = e.to_string();
        match e {
            ClaimsError::Conflict(_) => ContractError::Conflict(msg),
            ClaimsError::MissingDocument(_)
            | ClaimsError::NotComplete(_)
            | ClaimsError::Pass1Pending(_) => ContractError::Precondition(msg),
            _ => ContractError::BadRequest(msg),
        }
    }
}

impl From<PaymentsError> for ContractError {
    fn from(e: PaymentsError) -> Self {
        let msg = e.to_string();
        match e {
            PaymentsError::Routing(_) | PaymentsError::IncompleteClaimAdvice(_) => {
                ContractError::Precondition(msg)
            }
            PaymentsError::Claims(c) => c.into(),
            _ => ContractError::BadRequest(msg),
        }
    }
}

fn load<T: DeserializeOwned>(ctx: &mut TxContext<'_>, key: &str, what: &str) -> Result<T, ContractError> {
    ctx.get_json(key)?
        .ok_or_else(|| ContractError::NotFound(format!("{what} ({key})")))
}

/// A stored document in its interchange encoding.
fn get_doc(ctx: &mut TxContext<'_>, key: &str, kind: DocumentKind) -> Result<Option<EdiDocument>, ContractError> {
    match ctx.get(key) {
        None => Ok(None),
        Some(s) => parse_document(s.as_bytes(), kind)
            .map(Some)
            .map_err(|e| ContractError::Precondition(format!("corrupt document at {key}: {e}"))),
    }
}

fn load_po(ctx: &mut TxContext<'_>, po: &PoId) -> Result<PurchaseOrder, ContractError> {
    match get_doc(ctx, &keys::po(po), DocumentKind::Po)? {
        Some(EdiDocument::PurchaseOrder(p)) => Ok(p),
        _ => Err(ContractError::NotFound(format!("purchase order {po}"))),
    }
}

fn load_parties(ctx: &mut TxContext<'_>, line: &LineRef) -> Result<LineParties, ContractError> {
    load(ctx, &keys::parties(line), &format!("line item {line}"))
}

fn write_scope(ctx: &mut TxContext<'_>, prefix: &str, orgs: &BTreeSet<OrgId>) {
    ctx.put_json(&scope_key(prefix), orgs);
}

fn read_scope(ctx: &mut TxContext<'_>, prefix: &str) -> Result<BTreeSet<OrgId>, ContractError> {
    Ok(ctx.get_json(&scope_key(prefix))?.unwrap_or_default())
}

/// Stores the parties of a line and the matching read scope.
fn write_parties(ctx: &mut TxContext<'_>, line: &LineRef, parties: &LineParties) {
    ctx.put_json(&keys::parties(line), parties);
    let orgs: BTreeSet<OrgId> = parties.orgs().cloned().collect();
    write_scope(ctx, &keys::line_prefix(line), &orgs);
}

fn emit_scoped<T: Serialize>(
    ctx: &mut TxContext<'_>,
    name: &str,
    scope: impl IntoIterator<Item = OrgId>,
    body: T,
) {
    let mut payload = serde_json::to_value(body).expect("event payloads serialize");
    let scope: BTreeSet<OrgId> = scope.into_iter().collect();
    if let Value::Object(m) = &mut payload {
        m.insert("scope".into(), json!(scope));
    }
    ctx.emit(name, payload);
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ContractError> {
    if ok {
        Ok(())
    } else {
        Err(ContractError::Forbidden(msg()))
    }
}

fn check_id(field: &str, v: &str) -> Result<(), ContractError> {
    if v.is_empty() || v.contains('/') || v.chars().any(char::is_whitespace) {
        return Err(ContractError::bad(format!(
            "{field} `{v}` must be non-empty without '/' or whitespace"
        )));
    }
    Ok(())
}
