//! Loads a corpus into a ledger through the contract functions, in the
//! order the platform would see it.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::corpus::Corpus;
use super::BenchError;
use crate::chaincode::{keys, COMPUTE_CA, COMPUTE_PAS, PUT_DOCUMENT, PUT_EVENT};
use crate::edi::{serialize_document, EdiDocument, LineRef, OrgId, PoId};
use crate::events::{DISPATCHED_FROM_TRUCK, LOADED_ON_TRUCK, PACKED};
use crate::ledger::{Ledger, TxPhase, TxRequest, TxValidity};

const MAX_ROUNDS: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PopulateReport {
    pub transactions: usize,
    /// Submissions that hit an MVCC conflict and were sent again.
    pub resubmitted: usize,
    pub blocks: u64,
}

/// The org that owns a document: shipper for POs and RAs, the line's
/// supplier for DAs and CIs, the carrier for its invoices.
fn owner(doc: &EdiDocument, corpus: &Corpus) -> Option<OrgId> {
    let po_of = |po_id: &PoId| corpus.purchase_orders.iter().find(|p| &p.po_id == po_id);
    match doc {
        EdiDocument::PurchaseOrder(po) => Some(po.shipper_id.clone()),
        EdiDocument::CarrierInvoice(inv) => Some(inv.carrier_id.clone()),
        EdiDocument::ReceivingAdvice(ra) => po_of(&ra.po_id).map(|p| p.shipper_id.clone()),
        EdiDocument::CommercialInvoice(ci) => Some(ci.supplier_id.clone()),
        EdiDocument::DespatchAdvice(da) => po_of(&da.po_id)
            .and_then(|p| p.line(&da.line_item_id))
            .map(|l| l.supplier_id.clone()),
    }
}

fn put_document(doc: &EdiDocument, creator: OrgId) -> TxRequest {
    let document: Value = serde_json::from_slice(&serialize_document(doc)).expect("canonical JSON parses");
    let req = TxRequest::new(PUT_DOCUMENT, json!({ "document": document }), creator);
    match doc.line_ref() {
        Some(line) => req.with_scope(keys::line_prefix(&line)),
        None => req,
    }
}

pub fn compute_ca_request(line: &LineRef, operator: &OrgId, recompute: bool) -> TxRequest {
    TxRequest::new(
        COMPUTE_CA,
        json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "pass": "FULL", "recompute": recompute }),
        operator.clone(),
    )
    .with_scope(keys::line_prefix(line))
}

pub fn compute_pas_request(line: &LineRef, operator: &OrgId, regenerate: bool) -> TxRequest {
    TxRequest::new(
        COMPUTE_PAS,
        json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "regenerate": regenerate }),
        operator.clone(),
    )
    .with_scope(keys::line_prefix(line))
}

/// Requests in dependency waves. Requests of one wave never depend on
/// each other; conflicting ones are retried.
fn waves(corpus: &Corpus, operator: &OrgId) -> Vec<Vec<TxRequest>> {
    let doc = |d: EdiDocument| {
        let creator = owner(&d, corpus).unwrap_or_else(|| operator.clone());
        put_document(&d, creator)
    };
    let mut w: Vec<Vec<TxRequest>> = Vec::new();
    w.push(corpus.purchase_orders.iter().cloned().map(EdiDocument::PurchaseOrder).map(doc).collect());
    let mut lines: Vec<TxRequest> = Vec::new();
    lines.extend(corpus.despatch_advices.iter().cloned().map(EdiDocument::DespatchAdvice).map(doc));
    lines.extend(corpus.commercial_invoices.iter().cloned().map(EdiDocument::CommercialInvoice).map(doc));
    lines.extend(corpus.receiving_advices.iter().cloned().map(EdiDocument::ReceivingAdvice).map(doc));
    w.push(lines);
    // invoices for the same container touch the same line parties
    let mut roles: Vec<_> = corpus.carrier_invoices.iter().map(|i| i.carrier_role).collect();
    roles.sort();
    roles.dedup();
    for role in roles {
        w.push(
            corpus
                .carrier_invoices
                .iter()
                .filter(|i| i.carrier_role == role)
                .cloned()
                .map(EdiDocument::CarrierInvoice)
                .map(doc)
                .collect(),
        );
    }
    w.push(
        corpus
            .shipments
            .iter()
            .map(|s| {
                TxRequest::new(
                    PUT_EVENT,
                    json!({ "action": "REGISTER", "bol": s.bol, "containerNo": s.container_no, "lines": s.lines }),
                    operator.clone(),
                )
            })
            .collect(),
    );
    for ty in [PACKED, LOADED_ON_TRUCK, DISPATCHED_FROM_TRUCK] {
        w.push(
            corpus
                .events
                .iter()
                .filter(|e| e.event_type == ty)
                .map(|e| {
                    TxRequest::new(PUT_EVENT, json!({ "action": "TRACK", "event": e }), operator.clone())
                        .with_scope(keys::shipment_prefix(&e.bol, &e.container_no))
                })
                .collect(),
        );
    }
    let tuples = corpus.tuples();
    w.push(tuples.iter().map(|l| compute_ca_request(l, operator, false)).collect());
    w.push(tuples.iter().map(|l| compute_pas_request(l, operator, false)).collect());
    w
}

/// Stores every document, registers and tracks every container, and
/// computes the claim and payment advices of every tuple.
pub fn populate(ledger: &Ledger, corpus: &Corpus) -> Result<PopulateReport, BenchError> {
    let operator = ledger.operator();
    let mut report = PopulateReport::default();
    for wave in waves(corpus, &operator) {
        let mut pending = wave;
        for round in 0.. {
            if pending.is_empty() {
                break;
            }
            if round == MAX_ROUNDS {
                return Err(BenchError::Setup(format!("{} transactions kept conflicting", pending.len())));
            }
            let mut submitted = Vec::with_capacity(pending.len());
            for req in pending.drain(..) {
                let id = ledger.submit(req.clone())?;
                submitted.push((id, req));
            }
            ledger.settle()?;
            for (id, req) in submitted {
                let st = ledger.wait(&id, Duration::from_secs(3600))?;
                match (st.phase, st.validity) {
                    (TxPhase::Committed, Some(TxValidity::Valid)) => report.transactions += 1,
                    (TxPhase::Committed, Some(TxValidity::MvccConflict)) => {
                        report.resubmitted += 1;
                        pending.push(req);
                    }
                    _ => {
                        return Err(BenchError::Setup(format!(
                            "{} {} ended {:?}: {}",
                            req.function,
                            req.args,
                            st.validity.map(|v| format!("{v:?}")).unwrap_or_else(|| format!("{:?}", st.phase)),
                            st.error.map(|e| e.to_string()).unwrap_or_default()
                        )))
                    }
                }
            }
        }
    }
    report.blocks = ledger.height();
    Ok(report)
}
