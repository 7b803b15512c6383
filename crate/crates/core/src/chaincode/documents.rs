use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_id, emit_scoped, event, keys, load_parties, load_po, read_scope, require, write_parties,
    write_scope,
};
use crate::edi::{
    parse_any, serialize_document, CarrierInvoice, EdiDocument, LineRef, OrgId,
    PurchaseOrder,
};
use crate::ledger::contract::{decode_args, Contract, ContractError, TxContext};
use crate::lifecycle::LineParties;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PutDocumentArgs {
    /// The document in its interchange encoding, `kind` included.
    pub document: Value,
}

pub(super) struct PutDocument {
    pub operator: OrgId,
}

impl Contract for PutDocument {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let a: PutDocumentArgs = decode_args(args)?;
        let bytes = serde_json::to_vec(&a.document).expect("JSON values serialize");
        let doc = parse_any(&bytes).map_err(ContractError::bad)?;
        check_ids(&doc)?;
        let is_op = ctx.creator() == &self.operator;
        let key = match &doc {
            EdiDocument::PurchaseOrder(po) => {
                require(is_op || ctx.creator() == &po.shipper_id, || {
                    format!("only shipper {} may submit {}", po.shipper_id, po.po_id)
                })?;
                keys::po(&po.po_id)
            }
            EdiDocument::CarrierInvoice(inv) => {
                require(is_op || ctx.creator() == &inv.carrier_id, || {
                    format!("only carrier {} may submit {}", inv.carrier_id, inv.invoice_id)
                })?;
                keys::carrier_invoice(inv.invoice_id.as_str())
            }
            other => keys::line_doc(&other.line_ref().expect("per-line document"), other.kind()),
        };

        let canonical = String::from_utf8(serialize_document(&doc)).expect("canonical JSON is UTF-8");
        if let Some(existing) = ctx.get(&key) {
            if existing == canonical {
                return Ok(json!({ "kind": doc.kind(), "id": doc.id(), "key": key, "status": "UNCHANGED" }));
            }
            return Err(ContractError::Conflict(format!(
                "a different {} is already stored at {key}",
                doc.kind()
            )));
        }
        let index = keys::doc_index(doc.kind(), doc.id());
        if let Some(other) = ctx.get(&index) {
            return Err(ContractError::Conflict(format!(
                "{} id {} is already used at {other}",
                doc.kind(),
                doc.id()
            )));
        }

        let scope = match &doc {
            EdiDocument::PurchaseOrder(po) => store_po(ctx, po)?,
            EdiDocument::CarrierInvoice(inv) => store_carrier_invoice(ctx, inv)?,
            other => store_line_doc(ctx, other, is_op)?,
        };
        ctx.put(&key, canonical);
        ctx.put(&index, key.clone());
        emit_scoped(
            ctx,
            event::DOCUMENT_STORED,
            scope,
            json!({ "kind": doc.kind(), "id": doc.id(), "key": key }),
        );
        Ok(json!({ "kind": doc.kind(), "id": doc.id(), "key": key, "status": "STORED" }))
    }
}

fn check_ids(doc: &EdiDocument) -> Result<(), ContractError> {
    check_id("id", doc.id())?;
    match doc {
        EdiDocument::PurchaseOrder(po) => {
            for l in &po.line_items {
                check_id("lineItemId", l.line_item_id.as_str())?;
                check_id("supplierId", l.supplier_id.as_str())?;
            }
            check_id("shipperId", po.shipper_id.as_str())
        }
        EdiDocument::CarrierInvoice(inv) => {
            check_id("carrierId", inv.carrier_id.as_str())?;
            check_id("bol", inv.bol.as_str())?;
            check_id("containerNo", inv.container_no.as_str())
        }
        other => {
            let l = other.line_ref().expect("per-line document");
            check_id("poId", l.po_id.as_str())?;
            check_id("lineItemId", l.line_item_id.as_str())
        }
    }
}

fn store_po(ctx: &mut TxContext<'_>, po: &PurchaseOrder) -> Result<BTreeSet<OrgId>, ContractError> {
    let mut orgs: BTreeSet<OrgId> = po.line_items.iter().map(|l| l.supplier_id.clone()).collect();
    orgs.insert(po.shipper_id.clone());
    write_scope(ctx, keys::po(&po.po_id).as_str(), &orgs);
    for l in &po.line_items {
        let line = LineRef {
            po_id: po.po_id.clone(),
            line_item_id: l.line_item_id.clone(),
        };
        let parties = LineParties::new(po.shipper_id.clone(), l.supplier_id.clone());
        write_parties(ctx, &line, &parties);
    }
    Ok(orgs)
}

fn store_line_doc(
    ctx: &mut TxContext<'_>,
    doc: &EdiDocument,
    is_op: bool,
) -> Result<BTreeSet<OrgId>, ContractError> {
    let line = doc.line_ref().expect("per-line document");
    let po = load_po(ctx, &line.po_id)?;
    let item = po
        .line(&line.line_item_id)
        .ok_or_else(|| ContractError::NotFound(format!("line item {line}")))?;
    let creator = ctx.creator().clone();
    match doc {
        EdiDocument::ReceivingAdvice(_) => require(is_op || creator == po.shipper_id, || {
            format!("only shipper {} may submit receiving advices for {line}", po.shipper_id)
        })?,
        _ => require(is_op || creator == item.supplier_id, || {
            format!("only supplier {} may submit {} for {line}", item.supplier_id, doc.kind())
        })?,
    }
    if let EdiDocument::CommercialInvoice(ci) = doc {
        if ci.supplier_id != item.supplier_id {
            return Err(ContractError::bad(format!(
                "supplierId {} does not match line supplier {}",
                ci.supplier_id, item.supplier_id
            )));
        }
        if ci.unit_price.currency != item.unit_price.currency {
            return Err(ContractError::bad(format!(
                "unitPrice currency {} differs from purchase order currency {}",
                ci.unit_price.currency, item.unit_price.currency
            )));
        }
    }
    Ok(load_parties(ctx, &line)?.orgs().cloned().collect())
}

fn store_carrier_invoice(
    ctx: &mut TxContext<'_>,
    inv: &CarrierInvoice,
) -> Result<BTreeSet<OrgId>, ContractError> {
    let lines: BTreeSet<LineRef> = inv
        .allocations
        .iter()
        .map(|a| LineRef {
            po_id: a.po_id.clone(),
            line_item_id: a.line_item_id.clone(),
        })
        .collect();
    let mut scope: BTreeSet<OrgId> = BTreeSet::from([inv.carrier_id.clone()]);
    for line in &lines {
        let po = load_po(ctx, &line.po_id)?;
        let item = po
            .line(&line.line_item_id)
            .ok_or_else(|| ContractError::NotFound(format!("line item {line}")))?;
        if item.unit_price.currency != inv.total.currency {
            return Err(ContractError::bad(format!(
                "invoice currency {} differs from {line} currency {}",
                inv.total.currency, item.unit_price.currency
            )));
        }
        scope.insert(po.shipper_id.clone());

        let mut parties = load_parties(ctx, line)?;
        if parties.shipper == inv.carrier_id || parties.supplier == inv.carrier_id {
            return Err(ContractError::bad(format!(
                "{} is already the shipper or supplier of {line}",
                inv.carrier_id
            )));
        }
        match parties.carriers.get(&inv.carrier_id) {
            Some(role) if *role != inv.carrier_role => {
                return Err(ContractError::Conflict(format!(
                    "{} already invoices {line} as {role:?}",
                    inv.carrier_id
                )))
            }
            Some(_) => {}
            None => {
                parties.carriers.insert(inv.carrier_id.clone(), inv.carrier_role);
                write_parties(ctx, line, &parties);
            }
        }
        let list_key = keys::carrier_invoices(line);
        let mut ids: BTreeSet<String> = ctx.get_json(&list_key)?.unwrap_or_default();
        ids.insert(inv.invoice_id.to_string());
        ctx.put_json(&list_key, &ids);
    }
    write_scope(ctx, &keys::carrier_invoice(inv.invoice_id.as_str()), &scope);

    // let the carrier follow the container it moves
    let record = keys::shipment(&inv.bol, &inv.container_no);
    if ctx.get(&record).is_some() {
        let prefix = keys::shipment_prefix(&inv.bol, &inv.container_no);
        let mut readers = read_scope(ctx, &prefix)?;
        if readers.insert(inv.carrier_id.clone()) {
            write_scope(ctx, &prefix, &readers);
        }
    }
    Ok(scope)
}
