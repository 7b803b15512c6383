//! Payment-advice generation for the supplier and each carrier of a
//! `⟨PO, lineItem⟩`.
//!
//! The supplier PA starts from the invoiced amount and deducts every
//! non-damage claim. Carrier PAs start from the carrier's allocated share of
//! its invoices. `TRANSPORT_DAMAGE` is deducted from whichever payee a
//! [`DamageRouting`] strategy picks; the built-in routes it to the party that
//! packed the container.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{total_claim, ClaimAdvice, ClaimCategory, ClaimsError, Pass};
use crate::edi::{
    CarrierInvoice, CarrierRole, CommercialInvoice, Currency, EdiError, LineItemId, LineRef, Money,
    MoneyError, OrgId, PoId,
};
use crate::lifecycle::{self, AdviceState, StateChange};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaymentsError {
    #[error("claim advice {0} is not complete")]
    IncompleteClaimAdvice(String),
    #[error("commercial invoice {ci} does not belong to {line}")]
    InvoiceMismatch { ci: String, line: String },
    #[error("damage routing failed: {0}")]
    Routing(String),
    #[error("carrier {0} invoices under more than one role")]
    AmbiguousCarrierRole(OrgId),
    #[error(transparent)]
    Money(#[from] MoneyError),
    #[error(transparent)]
    Claims(#[from] ClaimsError),
    #[error(transparent)]
    Edi(#[from] EdiError),
}

/// Who packed the goods into the container.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PackedBy {
    #[default]
    Supplier,
    Ocm,
}

impl PackedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            PackedBy::Supplier => "SUPPLIER",
            PackedBy::Ocm => "OCM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SUPPLIER" => Some(PackedBy::Supplier),
            "OCM" => Some(PackedBy::Ocm),
            _ => None,
        }
    }
}

impl fmt::Display for PackedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayeeRole {
    Supplier,
    Ocm,
    OriginLand,
    Ocean,
    DestLand,
    Drayage,
}

impl From<CarrierRole> for PayeeRole {
    fn from(r: CarrierRole) -> Self {
        match r {
            CarrierRole::Ocm => PayeeRole::Ocm,
            CarrierRole::OriginLand => PayeeRole::OriginLand,
            CarrierRole::Ocean => PayeeRole::Ocean,
            CarrierRole::DestLand => PayeeRole::DestLand,
            CarrierRole::Drayage => PayeeRole::Drayage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PaFlag {
    /// Deductions exceed the gross amount.
    NegativeNet,
    /// No packing event was seen; damage was routed as if the supplier packed.
    PackedByDefaulted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Deduction {
    pub category: ClaimCategory,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaymentAdvice {
    pub pa_id: String,
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    pub payee_id: OrgId,
    pub payee_role: PayeeRole,
    pub gross_amount: Money,
    pub deductions: Vec<Deduction>,
    pub net_amount: Money,
    pub state: AdviceState,
    pub packed_by: PackedBy,
    pub flags: Vec<PaFlag>,
    pub history: Vec<StateChange>,
    pub contract_version: u32,
}

impl PaymentAdvice {
    pub fn line_ref(&self) -> LineRef {
        LineRef {
            po_id: self.po_id.clone(),
            line_item_id: self.line_item_id.clone(),
        }
    }

    pub fn total_deductions(&self) -> Result<Money, MoneyError> {
        Money::sum(
            self.gross_amount.currency,
            self.deductions.iter().map(|d| &d.amount),
        )
    }
}

pub fn pa_id(line: &LineRef, payee: &OrgId) -> String {
    format!("PA-{}-{}-{}", line.po_id, line.line_item_id, payee)
}

/// Per carrier, the sum of its allocations to `line` across all its invoices.
pub fn aggregate_carrier_gross(
    invoices: &[CarrierInvoice],
    line: &LineRef,
) -> Result<BTreeMap<OrgId, Money>, PaymentsError> {
    let mut out: BTreeMap<OrgId, Money> = BTreeMap::new();
    for inv in invoices {
        for a in inv.share_for(line) {
            match out.get_mut(&inv.carrier_id) {
                Some(acc) => *acc = acc.checked_add(&a.amount)?,
                None => {
                    out.insert(inv.carrier_id.clone(), a.amount);
                }
            }
        }
    }
    Ok(out)
}

/// A payee that can absorb part of the damage claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payee {
    pub id: OrgId,
    pub role: PayeeRole,
}

/// Decides which payees bear the `TRANSPORT_DAMAGE` claim. The returned
/// shares must add up to `damage`.
pub trait DamageRouting: Send + Sync {
    fn route(
        &self,
        damage: Money,
        packed_by: PackedBy,
        payees: &[Payee],
    ) -> Result<Vec<(OrgId, Money)>, PaymentsError>;
}

/// Deducts the whole damage claim from whoever packed the container.
#[derive(Debug, Clone, Copy, Default)]
pub struct RouteToPacker;

impl DamageRouting for RouteToPacker {
    fn route(
        &self,
        damage: Money,
        packed_by: PackedBy,
        payees: &[Payee],
    ) -> Result<Vec<(OrgId, Money)>, PaymentsError> {
        let wanted = match packed_by {
            PackedBy::Supplier => PayeeRole::Supplier,
            PackedBy::Ocm => PayeeRole::Ocm,
        };
        let payee = payees.iter().find(|p| p.role == wanted).ok_or_else(|| {
            PaymentsError::Routing(format!(
                "packed by {packed_by} but no {wanted:?} payee has invoiced this line item"
            ))
        })?;
        Ok(vec![(payee.id.clone(), damage)])
    }
}

/// Builds one PA per payee for a complete CA and issues them (CIP → AR).
pub fn compute_pas(
    ci: &CommercialInvoice,
    carrier_invoices: &[CarrierInvoice],
    ca: &ClaimAdvice,
    packed_by: PackedBy,
    routing: &dyn DamageRouting,
    now: Timestamp,
) -> Result<Vec<PaymentAdvice>, PaymentsError> {
    if ca.pass != Pass::Complete {
        return Err(PaymentsError::IncompleteClaimAdvice(ca.ca_id.clone()));
    }
    let line = ca.line_ref();
    if ci.po_id != line.po_id || ci.line_item_id != line.line_item_id {
        return Err(PaymentsError::InvoiceMismatch {
            ci: ci.ci_id.to_string(),
            line: line.to_string(),
        });
    }
    let currency: Currency = ca.currency();

    let mut payees = vec![Payee {
        id: ci.supplier_id.clone(),
        role: PayeeRole::Supplier,
    }];
    let mut gross = vec![ci.gross()?];
    let mut roles: BTreeMap<&OrgId, CarrierRole> = BTreeMap::new();
    for inv in carrier_invoices {
        if inv.share_for(&line).next().is_none() {
            continue;
        }
        if let Some(prev) = roles.insert(&inv.carrier_id, inv.carrier_role) {
            if prev != inv.carrier_role {
                return Err(PaymentsError::AmbiguousCarrierRole(inv.carrier_id.clone()));
            }
        }
    }
    for (carrier, amount) in aggregate_carrier_gross(carrier_invoices, &line)? {
        if amount.currency != currency {
            return Err(MoneyError::CurrencyMismatch {
                left: currency,
                right: amount.currency,
            }
            .into());
        }
        payees.push(Payee {
            role: roles[&carrier].into(),
            id: carrier,
        });
        gross.push(amount);
    }

    let mut deductions: Vec<Vec<Deduction>> = vec![Vec::new(); payees.len()];
    for claim in ca.claims.values() {
        if claim.category != ClaimCategory::TransportDamage {
            deductions[0].push(Deduction {
                category: claim.category,
                amount: claim.amount,
            });
        }
    }
    if let Some(damage) = ca.claim(ClaimCategory::TransportDamage) {
        let shares = routing.route(damage.amount, packed_by, &payees)?;
        let routed = Money::sum(currency, shares.iter().map(|(_, m)| m))?;
        if routed != damage.amount {
            return Err(PaymentsError::Routing(format!(
                "routed {routed} but the damage claim is {}",
                damage.amount
            )));
        }
        for (org, amount) in shares {
            let idx = payees.iter().position(|p| p.id == org).ok_or_else(|| {
                PaymentsError::Routing(format!("{org} is not a payee of {line}"))
            })?;
            deductions[idx].push(Deduction {
                category: ClaimCategory::TransportDamage,
                amount,
            });
        }
    }

    let mut out = Vec::with_capacity(payees.len());
    for ((payee, gross), deductions) in payees.into_iter().zip(gross).zip(deductions) {
        let deducted = Money::sum(currency, deductions.iter().map(|d| &d.amount))?;
        let net = gross.checked_sub(&deducted)?;
        let mut pa = PaymentAdvice {
            pa_id: pa_id(&line, &payee.id),
            po_id: line.po_id.clone(),
            line_item_id: line.line_item_id.clone(),
            payee_id: payee.id,
            payee_role: payee.role,
            gross_amount: gross,
            deductions,
            net_amount: net,
            state: AdviceState::Cip,
            packed_by,
            flags: Vec::new(),
            history: Vec::new(),
            contract_version: ca.contract_version,
        };
        if net.is_negative() {
            tracing::warn!(pa = %pa.pa_id, net = %net, "payment advice has a negative net amount");
            pa.flags.push(PaFlag::NegativeNet);
        }
        lifecycle::issue_payment(&mut pa, now).expect("freshly computed advices are in CIP");
        out.push(pa);
    }
    Ok(out)
}

/// Σ(gross − net) over `pas`; equals the CA's total claim for a consistent set.
pub fn total_deducted(pas: &[PaymentAdvice], currency: Currency) -> Result<Money, MoneyError> {
    let mut acc = Money::zero(currency);
    for pa in pas {
        acc = acc.checked_add(&pa.gross_amount.checked_sub(&pa.net_amount)?)?;
    }
    Ok(acc)
}

/// Checks the conservation identity for a PA set against its CA.
pub fn check_conservation(pas: &[PaymentAdvice], ca: &ClaimAdvice) -> Result<bool, PaymentsError> {
    Ok(total_deducted(pas, ca.currency())? == total_claim(ca)?)
}
