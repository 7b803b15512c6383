//! World-state key layout.
//!
//! Everything about one `⟨PO, lineItem⟩` lives under `li/{po}/{li}/` so a
//! single scope record covers it. Indexes under `doc-index/`, `pa-index/` and
//! `dispute-index/` carry no scope record and are operator-only.

use crate::edi::{Bol, ContainerNo, DocumentKind, LineRef, OrgId, PoId};

pub fn po(po: &PoId) -> String {
    format!("po/{po}")
}

pub fn line_prefix(line: &LineRef) -> String {
    format!("li/{}/{}/", line.po_id, line.line_item_id)
}

/// DA, RA or CI of a line.
pub fn line_doc(line: &LineRef, kind: DocumentKind) -> String {
    format!("{}{}", line_prefix(line), kind.as_str())
}

pub fn parties(line: &LineRef) -> String {
    format!("{}parties", line_prefix(line))
}

pub fn ca(line: &LineRef) -> String {
    format!("{}ca", line_prefix(line))
}

pub fn ca_archive_prefix(line: &LineRef) -> String {
    format!("{}ca-archive/", line_prefix(line))
}

pub fn ca_archive(line: &LineRef, n: usize) -> String {
    format!("{}v{n:04}", ca_archive_prefix(line))
}

pub fn pa_prefix(line: &LineRef) -> String {
    format!("{}pa/", line_prefix(line))
}

pub fn pa(line: &LineRef, payee: &OrgId) -> String {
    format!("{}{payee}", pa_prefix(line))
}

pub fn dispute_prefix(line: &LineRef) -> String {
    format!("{}dispute/", line_prefix(line))
}

pub fn dispute(line: &LineRef, id: &str) -> String {
    format!("{}{id}", dispute_prefix(line))
}

/// Id of the open dispute on a target, keyed by the target's tag.
pub fn dispute_open(line: &LineRef, tag: &str) -> String {
    format!("{}dispute-open/{tag}", line_prefix(line))
}

pub fn carrier_invoices(line: &LineRef) -> String {
    format!("{}carrier-invoices", line_prefix(line))
}

pub fn shipments(line: &LineRef) -> String {
    format!("{}shipments", line_prefix(line))
}

/// When the first container of the line was loaded. Selects the contract
/// version that computes its claims.
pub fn shipped_at(line: &LineRef) -> String {
    format!("{}shipped-at", line_prefix(line))
}

pub fn carrier_invoice(id: &str) -> String {
    format!("carrier-invoice/{id}")
}

pub fn shipment_prefix(bol: &Bol, container: &ContainerNo) -> String {
    format!("shipment/{bol}/{container}/")
}

pub fn shipment(bol: &Bol, container: &ContainerNo) -> String {
    format!("{}record", shipment_prefix(bol, container))
}

pub fn shipment_events_prefix(bol: &Bol, container: &ContainerNo) -> String {
    format!("{}event/", shipment_prefix(bol, container))
}

pub fn shipment_event(bol: &Bol, container: &ContainerNo, event_id: &str) -> String {
    format!("{}{event_id}", shipment_events_prefix(bol, container))
}

pub fn doc_index(kind: DocumentKind, id: &str) -> String {
    format!("doc-index/{}/{id}", kind.as_str())
}

pub fn pa_index(pa_id: &str) -> String {
    format!("pa-index/{pa_id}")
}

pub fn dispute_index(id: &str) -> String {
    format!("dispute-index/{id}")
}

/// Splits `li/{po}/{li}/...` back into its line reference.
pub fn parse_line(key: &str) -> Option<LineRef> {
    let rest = key.strip_prefix("li/")?;
    let mut it = rest.splitn(3, '/');
    let po = it.next()?;
    let li = it.next()?;
    it.next()?;
    Some(LineRef::new(po, li))
}
