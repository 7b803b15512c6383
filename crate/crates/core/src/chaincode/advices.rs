use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{emit_scoped, event, get_doc, keys, load_parties, load_po, require, ShipmentRecord};
use crate::claims::{self, ClaimAdvice, ClaimCategory, ClaimsError, Pass, PoLine};
use crate::edi::{
    Bol, CarrierInvoice, CommercialInvoice, ContainerNo, DespatchAdvice, DocumentKind,
    EdiDocument, LineItemId, LineRef, OrgId, PoId, ReceivingAdvice,
};
use crate::ledger::contract::{decode_args, Contract, ContractError, TxContext};
use crate::payments::{compute_pas, DamageRouting, PackedBy, PaFlag, PaymentAdvice};
use crate::time::Timestamp;

/// How claim advices are computed. Installing a new `computeCA` version
/// with a different policy is how the trading partners change the rules.
pub trait ClaimPolicy: Send + Sync {
    fn pass1(
        &self,
        line: PoLine<'_>,
        da: &DespatchAdvice,
        ci: &CommercialInvoice,
        now: Timestamp,
    ) -> Result<ClaimAdvice, ClaimsError>;

    fn pass2(
        &self,
        ca: &ClaimAdvice,
        line: PoLine<'_>,
        ra: &ReceivingAdvice,
        now: Timestamp,
    ) -> Result<ClaimAdvice, ClaimsError>;
}

/// The five-category matching rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardClaims;

impl ClaimPolicy for StandardClaims {
    fn pass1(
        &self,
        line: PoLine<'_>,
        da: &DespatchAdvice,
        ci: &CommercialInvoice,
        now: Timestamp,
    ) -> Result<ClaimAdvice, ClaimsError> {
        claims::compute_pass1(line, da, ci, now)
    }

    fn pass2(
        &self,
        ca: &ClaimAdvice,
        line: PoLine<'_>,
        ra: &ReceivingAdvice,
        now: Timestamp,
    ) -> Result<ClaimAdvice, ClaimsError> {
        claims::compute_pass2(ca, line, ra, now)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PassSelector {
    /// PO, DA and CI only.
    One,
    /// Adds the receiving advice to an existing pass-1 advice.
    Two,
    /// Both passes in one transaction.
    #[default]
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComputeCaArgs {
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    #[serde(default)]
    pub pass: PassSelector,
    /// Recompute an existing advice with the contract version in force,
    /// keeping claim states and archiving the previous advice.
    #[serde(default)]
    pub recompute: bool,
}

impl ComputeCaArgs {
    pub fn line(&self) -> LineRef {
        LineRef {
            po_id: self.po_id.clone(),
            line_item_id: self.line_item_id.clone(),
        }
    }
}

pub(super) struct ComputeCa {
    pub operator: OrgId,
    pub policy: Arc<dyn ClaimPolicy>,
}

fn line_doc<T>(
    ctx: &mut TxContext<'_>,
    line: &LineRef,
    kind: DocumentKind,
    pick: fn(EdiDocument) -> Option<T>,
) -> Result<Option<T>, ContractError> {
    Ok(get_doc(ctx, &keys::line_doc(line, kind), kind)?.and_then(pick))
}

fn da(d: EdiDocument) -> Option<DespatchAdvice> {
    match d {
        EdiDocument::DespatchAdvice(x) => Some(x),
        _ => None,
    }
}

fn ra(d: EdiDocument) -> Option<ReceivingAdvice> {
    match d {
        EdiDocument::ReceivingAdvice(x) => Some(x),
        _ => None,
    }
}

fn ci(d: EdiDocument) -> Option<CommercialInvoice> {
    match d {
        EdiDocument::CommercialInvoice(x) => Some(x),
        _ => None,
    }
}

fn need<T>(doc: Option<T>, what: &str, line: &LineRef) -> Result<T, ContractError> {
    doc.ok_or_else(|| ContractError::Precondition(format!("{what} for {line} has not been received")))
}

impl Contract for ComputeCa {
    /// Claims are computed under the rules in force when the goods shipped.
    fn as_of(&self, ctx: &mut TxContext<'_>, args: &Value) -> Timestamp {
        let Ok(a) = decode_args::<ComputeCaArgs>(args) else {
            return ctx.now();
        };
        ctx.get_json::<Timestamp>(&keys::shipped_at(&a.line()))
            .ok()
            .flatten()
            .unwrap_or_else(|| ctx.now())
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let a: ComputeCaArgs = decode_args(args)?;
        let line = a.line();
        let po = load_po(ctx, &line.po_id)?;
        require(ctx.creator() == &self.operator || ctx.creator() == &po.shipper_id, || {
            "claim advices are generated by the platform or the shipper".into()
        })?;
        let pl = PoLine::of(&po, &line.line_item_id)?;
        let parties = load_parties(ctx, &line)?;
        let now = ctx.now();
        let ca_key = keys::ca(&line);
        let existing: Option<ClaimAdvice> = ctx.get_json(&ca_key)?;

        let (mut ca, status, issued): (ClaimAdvice, &str, Vec<ClaimCategory>) =
            match (existing, a.recompute) {
                (Some(old), false) => {
                    if a.pass == PassSelector::One || old.pass == Pass::Complete && a.pass != PassSelector::Two {
                        return Ok(json!({ "caId": old.ca_id, "pass": old.pass, "status": "UNCHANGED" }));
                    }
                    let ra = need(line_doc(ctx, &line, DocumentKind::Ra, ra)?, "receiving advice", &line)?;
                    let next = self.policy.pass2(&old, pl, &ra, now)?;
                    if next == old {
                        return Ok(json!({ "caId": old.ca_id, "pass": old.pass, "status": "UNCHANGED" }));
                    }
                    (next, "ISSUED", vec![ClaimCategory::TransportDamage])
                }
                (None, _) => {
                    if a.pass == PassSelector::Two {
                        return Err(ContractError::Precondition(format!(
                            "pass 1 has not run for {line}"
                        )));
                    }
                    let da = need(line_doc(ctx, &line, DocumentKind::Da, da)?, "despatch advice", &line)?;
                    let ci = need(line_doc(ctx, &line, DocumentKind::Ci, ci)?, "commercial invoice", &line)?;
                    let mut next = self.policy.pass1(pl, &da, &ci, now)?;
                    if a.pass == PassSelector::Full {
                        let ra = need(line_doc(ctx, &line, DocumentKind::Ra, ra)?, "receiving advice", &line)?;
                        next = self.policy.pass2(&next, pl, &ra, now)?;
                    }
                    let cats = next.claims.keys().copied().collect();
                    (next, "ISSUED", cats)
                }
                (Some(old), true) => {
                    let da = need(line_doc(ctx, &line, DocumentKind::Da, da)?, "despatch advice", &line)?;
                    let ci = need(line_doc(ctx, &line, DocumentKind::Ci, ci)?, "commercial invoice", &line)?;
                    let mut next = self.policy.pass1(pl, &da, &ci, now)?;
                    let ra_doc = line_doc(ctx, &line, DocumentKind::Ra, ra)?;
                    let want_pass2 = a.pass != PassSelector::One || old.pass == Pass::Complete;
                    if let (true, Some(ra)) = (want_pass2, ra_doc) {
                        next = self.policy.pass2(&next, pl, &ra, now)?;
                    }
                    carry_states(&old, &mut next);
                    let n = ctx.scan(&keys::ca_archive_prefix(&line)).len() + 1;
                    ctx.put_json(&keys::ca_archive(&line, n), &old);
                    let fresh = next
                        .claims
                        .keys()
                        .filter(|c| !old.claims.contains_key(c))
                        .copied()
                        .collect();
                    (next, "RECOMPUTED", fresh)
                }
            };
        ca.contract_version = ctx.contract_version();
        ctx.put_json(&ca_key, &ca);

        let scope: Vec<OrgId> = parties.orgs().cloned().collect();
        let body = json!({
            "caId": ca.ca_id,
            "line": line,
            "pass": ca.pass,
            "categories": issued,
            "contractVersion": ca.contract_version,
        });
        if status == "RECOMPUTED" {
            emit_scoped(ctx, event::CA_RECOMPUTED, scope.clone(), body.clone());
        }
        if !issued.is_empty() {
            emit_scoped(ctx, event::CA_ISSUED, scope, body);
        }
        Ok(json!({
            "caId": ca.ca_id,
            "pass": ca.pass,
            "status": status,
            "contractVersion": ca.contract_version,
        }))
    }
}

/// Keeps the lifecycle of categories that survive a recomputation.
fn carry_states(old: &ClaimAdvice, next: &mut ClaimAdvice) {
    for (cat, claim) in next.claims.iter_mut() {
        if let Some(prev) = old.claims.get(cat) {
            claim.state = prev.state;
            claim.issued_at = prev.issued_at;
            claim.history = prev.history.clone();
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComputePasArgs {
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    /// Rewrite advices that already exist (finalized ones are never touched).
    #[serde(default)]
    pub regenerate: bool,
}

pub(super) struct ComputePas {
    pub operator: OrgId,
    pub routing: Arc<dyn DamageRouting>,
}

impl Contract for ComputePas {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let a: ComputePasArgs = decode_args(args)?;
        let line = LineRef {
            po_id: a.po_id,
            line_item_id: a.line_item_id,
        };
        let po = load_po(ctx, &line.po_id)?;
        require(ctx.creator() == &self.operator || ctx.creator() == &po.shipper_id, || {
            "payment advices are generated by the platform or the shipper".into()
        })?;
        let parties = load_parties(ctx, &line)?;
        let ca: ClaimAdvice = ctx.get_json(&keys::ca(&line))?.ok_or_else(|| {
            ContractError::Precondition(format!("no claim advice for {line}"))
        })?;
        if ca.pass != Pass::Complete {
            return Err(ContractError::Precondition(format!(
                "claim advice for {line} is not complete"
            )));
        }
        let ci = need(line_doc(ctx, &line, DocumentKind::Ci, ci)?, "commercial invoice", &line)?;

        let ids: BTreeSet<String> = ctx.get_json(&keys::carrier_invoices(&line))?.unwrap_or_default();
        let mut invoices: Vec<CarrierInvoice> = Vec::with_capacity(ids.len());
        for id in &ids {
            match get_doc(ctx, &keys::carrier_invoice(id), DocumentKind::CarrierInvoice)? {
                Some(EdiDocument::CarrierInvoice(inv)) => invoices.push(inv),
                _ => {
                    return Err(ContractError::Precondition(format!(
                        "carrier invoice {id} listed for {line} is missing"
                    )))
                }
            }
        }

        let containers: BTreeSet<(Bol, ContainerNo)> =
            ctx.get_json(&keys::shipments(&line))?.unwrap_or_default();
        let mut packers = BTreeSet::new();
        for (bol, c) in &containers {
            if let Some(r) = ctx.get_json::<ShipmentRecord>(&keys::shipment(bol, c))? {
                if let Some(p) = r.packed_by {
                    packers.insert(p.as_str());
                }
            }
        }
        if packers.len() > 1 {
            return Err(ContractError::Precondition(format!(
                "containers of {line} report different packers {packers:?}"
            )));
        }
        let (packed_by, defaulted) = match packers.into_iter().next() {
            Some(p) => (PackedBy::parse(p).expect("stored packers parse"), false),
            None => (PackedBy::Supplier, true),
        };

        let now = ctx.now();
        let computed = compute_pas(&ci, &invoices, &ca, packed_by, self.routing.as_ref(), now)?;
        let mut issued = Vec::new();
        let mut revised = Vec::new();
        let mut unchanged = Vec::new();
        for mut pa in computed {
            pa.contract_version = ctx.contract_version();
            if defaulted {
                pa.flags.push(PaFlag::PackedByDefaulted);
            }
            let key = keys::pa(&line, &pa.payee_id);
            match ctx.get_json::<PaymentAdvice>(&key)? {
                Some(old) if !a.regenerate || old.state.is_terminal() => {
                    unchanged.push(old.pa_id);
                    continue;
                }
                Some(old) => {
                    if same_amounts(&old, &pa) {
                        unchanged.push(pa.pa_id);
                        continue;
                    }
                    pa.state = old.state;
                    pa.history = old.history;
                    revised.push(pa.pa_id.clone());
                }
                None => issued.push(pa.pa_id.clone()),
            }
            ctx.put(&keys::pa_index(&pa.pa_id), key.clone());
            ctx.put_json(&key, &pa);
            tracing::debug!(pa = %pa.pa_id, net = %pa.net_amount, "payment advice written");
        }
        let scope: Vec<OrgId> = parties.orgs().cloned().collect();
        for (name, ids) in [(event::PA_ISSUED, &issued), (event::PA_REVISED, &revised)] {
            if !ids.is_empty() {
                emit_scoped(
                    ctx,
                    name,
                    scope.clone(),
                    json!({ "line": line, "paIds": ids, "packedBy": packed_by }),
                );
            }
        }
        Ok(json!({
            "issued": issued,
            "revised": revised,
            "unchanged": unchanged,
            "packedBy": packed_by,
            "packedByDefaulted": defaulted,
        }))
    }
}

fn same_amounts(a: &PaymentAdvice, b: &PaymentAdvice) -> bool {
    a.gross_amount == b.gross_amount
        && a.net_amount == b.net_amount
        && a.deductions == b.deductions
        && a.packed_by == b.packed_by
        && a.flags == b.flags
}
