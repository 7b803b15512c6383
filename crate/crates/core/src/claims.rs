//! Claim-advice generation by 4-way matching of PO, DA, RA and CI.
//!
//! A claim advice (CA) is generated per `⟨PO, lineItem⟩` in two passes. Pass 1
//! runs before delivery with PO, DA and CI and produces three categories; pass
//! 2 runs once the receiving advice exists and adds `TRANSPORT_DAMAGE`. In both
//! scenarios the category amounts add up to `CI.Q·CI.P − RA.Q·PO.P`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edi::{
    CommercialInvoice, Currency, DespatchAdvice, DocId, EdiError, LineItem, LineItemId, LineRef,
    Money, MoneyError, OrgId, PoId, PurchaseOrder, Quantity, ReceivingAdvice,
};
use crate::lifecycle::{self, AdviceState, StateChange};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimsError {
    #[error("{kind} references {found}, expected {expected}")]
    ReferenceMismatch {
        kind: &'static str,
        expected: String,
        found: String,
    },
    #[error("line item {0} not found on purchase order")]
    UnknownLineItem(LineItemId),
    #[error("{0} is required for this operation")]
    MissingDocument(&'static str),
    #[error("accepted quantity {accepted} exceeds despatched quantity {despatched}")]
    AcceptedExceedsDespatch { accepted: u64, despatched: u64 },
    #[error("claim advice {0} is not complete")]
    NotComplete(String),
    #[error("claim advice {0} is already complete with a different receiving advice")]
    Conflict(String),
    #[error("claim advice {0} has not finished pass 1")]
    Pass1Pending(String),
    #[error(transparent)]
    Money(#[from] MoneyError),
    #[error(transparent)]
    Edi(#[from] EdiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClaimCategory {
    ShortDelivery,
    ExcessDelivery,
    PriceDiscrepancy,
    GoodsNotDelivered,
    TransportDamage,
}

impl ClaimCategory {
    pub const ALL: [ClaimCategory; 5] = [
        ClaimCategory::ShortDelivery,
        ClaimCategory::ExcessDelivery,
        ClaimCategory::PriceDiscrepancy,
        ClaimCategory::GoodsNotDelivered,
        ClaimCategory::TransportDamage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimCategory::ShortDelivery => "SHORT_DELIVERY",
            ClaimCategory::ExcessDelivery => "EXCESS_DELIVERY",
            ClaimCategory::PriceDiscrepancy => "PRICE_DISCREPANCY",
            ClaimCategory::GoodsNotDelivered => "GOODS_NOT_DELIVERED",
            ClaimCategory::TransportDamage => "TRANSPORT_DAMAGE",
        }
    }
}

impl fmt::Display for ClaimCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    /// CI.Q ≤ PO.Q
    Short,
    /// CI.Q > PO.Q
    Excess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pass {
    Pass1Done,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Claim {
    pub category: ClaimCategory,
    /// Physical discrepancy in goods units, recorded even when the amount is 0.
    pub quantity_delta: i64,
    pub amount: Money,
    pub state: AdviceState,
    pub issued_at: Option<Timestamp>,
    pub history: Vec<StateChange>,
}

impl Claim {
    fn computed(category: ClaimCategory, quantity_delta: i64, amount: Money) -> Self {
        Claim {
            category,
            quantity_delta,
            amount,
            state: AdviceState::Cip,
            issued_at: None,
            history: Vec::new(),
        }
    }
}

/// The matched quantities and prices a CA was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchInputs {
    pub po_quantity: Quantity,
    pub po_price: Money,
    /// DA.Q as despatched, before clamping.
    pub despatched_quantity: Quantity,
    pub invoiced_quantity: Quantity,
    pub invoiced_price: Money,
    pub accepted_quantity: Option<Quantity>,
    pub da_id: DocId,
    pub ci_id: DocId,
    pub ra_id: Option<DocId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClaimAdvice {
    pub ca_id: String,
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    pub shipper_id: OrgId,
    pub supplier_id: OrgId,
    pub scenario: Scenario,
    pub claims: BTreeMap<ClaimCategory, Claim>,
    pub pass: Pass,
    /// DA.Q after preprocessing, `min(DA.Q, PO.Q)`.
    #[serde(rename = "clampedDAQ")]
    pub clamped_da_q: Quantity,
    pub inputs: MatchInputs,
    pub contract_version: u32,
}

impl ClaimAdvice {
    pub fn line_ref(&self) -> LineRef {
        LineRef {
            po_id: self.po_id.clone(),
            line_item_id: self.line_item_id.clone(),
        }
    }

    pub fn currency(&self) -> Currency {
        self.inputs.po_price.currency
    }

    pub fn claim(&self, category: ClaimCategory) -> Option<&Claim> {
        self.claims.get(&category)
    }

    pub fn claim_mut(&mut self, category: ClaimCategory) -> Option<&mut Claim> {
        self.claims.get_mut(&category)
    }
}

pub fn ca_id(line: &LineRef) -> String {
    format!("CA-{}-{}", line.po_id, line.line_item_id)
}

/// One PO line item together with the PO-level fields it needs.
#[derive(Debug, Clone, Copy)]
pub struct PoLine<'a> {
    pub po_id: &'a PoId,
    pub shipper_id: &'a OrgId,
    pub item: &'a LineItem,
}

impl<'a> PoLine<'a> {
    pub fn of(po: &'a PurchaseOrder, line_item_id: &LineItemId) -> Result<Self, ClaimsError> {
        let item = po
            .line(line_item_id)
            .ok_or_else(|| ClaimsError::UnknownLineItem(line_item_id.clone()))?;
        Ok(PoLine {
            po_id: &po.po_id,
            shipper_id: &po.shipper_id,
            item,
        })
    }

    pub fn line_ref(&self) -> LineRef {
        LineRef {
            po_id: self.po_id.clone(),
            line_item_id: self.item.line_item_id.clone(),
        }
    }

    fn check_ref(
        &self,
        kind: &'static str,
        po_id: &PoId,
        line_item_id: &LineItemId,
    ) -> Result<(), ClaimsError> {
        if po_id != self.po_id || line_item_id != &self.item.line_item_id {
            return Err(ClaimsError::ReferenceMismatch {
                kind,
                expected: self.line_ref().to_string(),
                found: format!("{po_id}/{line_item_id}"),
            });
        }
        Ok(())
    }
}

/// `min(DA.Q, PO.Q)`: the shipper never pays for more than was ordered.
pub fn clamp_despatch(line: &LineItem, da: &DespatchAdvice) -> Quantity {
    da.quantity.min(line.quantity)
}

pub fn classify_scenario(line: &LineItem, ci: &CommercialInvoice) -> Scenario {
    if ci.quantity <= line.quantity {
        Scenario::Short
    } else {
        Scenario::Excess
    }
}

/// Pass 1 over PO, DA and CI. The three categories are issued immediately.
pub fn compute_pass1(
    line: PoLine<'_>,
    da: &DespatchAdvice,
    ci: &CommercialInvoice,
    now: Timestamp,
) -> Result<ClaimAdvice, ClaimsError> {
    line.check_ref("DA", &da.po_id, &da.line_item_id)?;
    line.check_ref("CI", &ci.po_id, &ci.line_item_id)?;
    let po_p = line.item.unit_price;
    if ci.unit_price.currency != po_p.currency {
        return Err(MoneyError::CurrencyMismatch {
            left: po_p.currency,
            right: ci.unit_price.currency,
        }
        .into());
    }

    let po_q = line.item.quantity.signed();
    let ci_q = ci.quantity.signed();
    let clamped = clamp_despatch(line.item, da);
    let da_q = clamped.signed();
    let price_delta = ci.unit_price.checked_sub(&po_p)?;
    let scenario = classify_scenario(line.item, ci);

    let mut claims = BTreeMap::new();
    let mut put = |c: Claim| {
        claims.insert(c.category, c);
    };
    match scenario {
        Scenario::Short => {
            put(Claim::computed(
                ClaimCategory::ShortDelivery,
                po_q - ci_q,
                Money::zero(po_p.currency),
            ));
            put(Claim::computed(
                ClaimCategory::GoodsNotDelivered,
                ci_q - da_q,
                po_p.checked_mul(ci_q - da_q)?,
            ));
        }
        Scenario::Excess => {
            put(Claim::computed(
                ClaimCategory::ExcessDelivery,
                ci_q - po_q,
                po_p.checked_mul(ci_q - po_q)?,
            ));
            put(Claim::computed(
                ClaimCategory::GoodsNotDelivered,
                po_q - da_q,
                po_p.checked_mul(po_q - da_q)?,
            ));
        }
    }
    put(Claim::computed(
        ClaimCategory::PriceDiscrepancy,
        0,
        price_delta.checked_mul(ci_q)?,
    ));

    for claim in claims.values_mut() {
        lifecycle::issue_claim(claim, now).expect("freshly computed claims are in CIP");
    }

    let line_ref = line.line_ref();
    Ok(ClaimAdvice {
        ca_id: ca_id(&line_ref),
        po_id: line_ref.po_id,
        line_item_id: line_ref.line_item_id,
        shipper_id: line.shipper_id.clone(),
        supplier_id: line.item.supplier_id.clone(),
        scenario,
        claims,
        pass: Pass::Pass1Done,
        clamped_da_q: clamped,
        inputs: MatchInputs {
            po_quantity: line.item.quantity,
            po_price: po_p,
            despatched_quantity: da.quantity,
            invoiced_quantity: ci.quantity,
            invoiced_price: ci.unit_price,
            accepted_quantity: None,
            da_id: da.da_id.clone(),
            ci_id: ci.ci_id.clone(),
            ra_id: None,
        },
        contract_version: 1,
    })
}

/// Pass 2: adds `TRANSPORT_DAMAGE` from the receiving advice. Re-running with
/// the same RA returns the advice unchanged.
pub fn compute_pass2(
    ca: &ClaimAdvice,
    line: PoLine<'_>,
    ra: &ReceivingAdvice,
    now: Timestamp,
) -> Result<ClaimAdvice, ClaimsError> {
    line.check_ref("CA", &ca.po_id, &ca.line_item_id)?;
    line.check_ref("RA", &ra.po_id, &ra.line_item_id)?;
    if ca.pass == Pass::Complete {
        let same = ca.inputs.ra_id.as_ref() == Some(&ra.ra_id)
            && ca.inputs.accepted_quantity == Some(ra.accepted_quantity);
        return if same {
            Ok(ca.clone())
        } else {
            Err(ClaimsError::Conflict(ca.ca_id.clone()))
        };
    }
    if ra.accepted_quantity > ca.clamped_da_q {
        return Err(ClaimsError::AcceptedExceedsDespatch {
            accepted: ra.accepted_quantity.0,
            despatched: ca.clamped_da_q.0,
        });
    }
    let delta = ca.clamped_da_q.signed() - ra.accepted_quantity.signed();
    let mut damage = Claim::computed(
        ClaimCategory::TransportDamage,
        delta,
        line.item.unit_price.checked_mul(delta)?,
    );
    lifecycle::issue_claim(&mut damage, now).expect("freshly computed claims are in CIP");

    let mut out = ca.clone();
    out.claims.insert(ClaimCategory::TransportDamage, damage);
    out.pass = Pass::Complete;
    out.inputs.accepted_quantity = Some(ra.accepted_quantity);
    out.inputs.ra_id = Some(ra.ra_id.clone());
    Ok(out)
}

/// Single-shot generation over all four documents.
pub fn compute_ca(
    line: PoLine<'_>,
    da: &DespatchAdvice,
    ra: &ReceivingAdvice,
    ci: &CommercialInvoice,
    now: Timestamp,
) -> Result<ClaimAdvice, ClaimsError> {
    let pass1 = compute_pass1(line, da, ci, now)?;
    compute_pass2(&pass1, line, ra, now)
}

/// Sum of all category amounts of a complete CA.
pub fn total_claim(ca: &ClaimAdvice) -> Result<Money, ClaimsError> {
    if ca.pass != Pass::Complete {
        return Err(ClaimsError::NotComplete(ca.ca_id.clone()));
    }
    Ok(Money::sum(ca.currency(), ca.claims.values().map(|c| &c.amount))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchCriterion {
    /// CI.Q ≤ PO.Q
    InvoicedWithinOrdered,
    /// CI.P ≤ PO.P
    PriceWithinOrdered,
    /// CI.Q ≤ DA.Q
    InvoicedWithinDespatched,
    /// CI.Q ≤ RA.Q
    InvoicedWithinAccepted,
}

impl MatchCriterion {
    pub fn description(self) -> &'static str {
        match self {
            MatchCriterion::InvoicedWithinOrdered => "CI.Q <= PO.Q",
            MatchCriterion::PriceWithinOrdered => "CI.P <= PO.P",
            MatchCriterion::InvoicedWithinDespatched => "CI.Q <= DA.Q",
            MatchCriterion::InvoicedWithinAccepted => "CI.Q <= RA.Q",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLevel {
    TwoWay,
    ThreeWay,
    FourWay,
}

impl TryFrom<u8> for MatchLevel {
    type Error = u8;

    fn try_from(v: u8) -> Result<Self, u8> {
        match v {
            2 => Ok(MatchLevel::TwoWay),
            3 => Ok(MatchLevel::ThreeWay),
            4 => Ok(MatchLevel::FourWay),
            other => Err(other),
        }
    }
}

/// The criteria of `level` that the documents violate, in criterion order.
/// DA.Q is compared after clamping.
pub fn matching_report(
    line: PoLine<'_>,
    da: Option<&DespatchAdvice>,
    ra: Option<&ReceivingAdvice>,
    ci: &CommercialInvoice,
    level: MatchLevel,
) -> Result<Vec<MatchCriterion>, ClaimsError> {
    line.check_ref("CI", &ci.po_id, &ci.line_item_id)?;
    let mut violated = Vec::new();
    if ci.quantity > line.item.quantity {
        violated.push(MatchCriterion::InvoicedWithinOrdered);
    }
    if ci.unit_price.currency != line.item.unit_price.currency {
        return Err(MoneyError::CurrencyMismatch {
            left: line.item.unit_price.currency,
            right: ci.unit_price.currency,
        }
        .into());
    }
    if ci.unit_price.amount > line.item.unit_price.amount {
        violated.push(MatchCriterion::PriceWithinOrdered);
    }
    if level == MatchLevel::TwoWay {
        return Ok(violated);
    }
    let da = da.ok_or(ClaimsError::MissingDocument("DA"))?;
    line.check_ref("DA", &da.po_id, &da.line_item_id)?;
    if ci.quantity > clamp_despatch(line.item, da) {
        violated.push(MatchCriterion::InvoicedWithinDespatched);
    }
    if level == MatchLevel::ThreeWay {
        return Ok(violated);
    }
    let ra = ra.ok_or(ClaimsError::MissingDocument("RA"))?;
    line.check_ref("RA", &ra.po_id, &ra.line_item_id)?;
    if ci.quantity > ra.accepted_quantity {
        violated.push(MatchCriterion::InvoicedWithinAccepted);
    }
    Ok(violated)
}
