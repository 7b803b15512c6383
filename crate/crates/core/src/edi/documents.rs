use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::money::{Currency, Money, Quantity};
use super::EdiError;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(PoId);
string_id!(LineItemId);
string_id!(
    /// Organization identifier (shipper, supplier, carrier).
    OrgId
);
string_id!(
    /// Identifier of a single EDI document (daId, raId, ciId, invoiceId).
    DocId
);
string_id!(
    /// Bill of lading.
    Bol
);
string_id!(ContainerNo);

/// A `⟨PO, lineItem⟩` pair: the unit at which advices are generated and
/// data is scoped.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LineRef {
    pub po_id: PoId,
    pub line_item_id: LineItemId,
}

impl LineRef {
    pub fn new(po: impl Into<String>, li: impl Into<String>) -> Self {
        Self {
            po_id: PoId(po.into()),
            line_item_id: LineItemId(li.into()),
        }
    }
}

impl fmt::Display for LineRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.po_id, self.line_item_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DocumentKind {
    #[serde(rename = "PO")]
    Po,
    #[serde(rename = "DA")]
    Da,
    #[serde(rename = "RA")]
    Ra,
    #[serde(rename = "CI")]
    Ci,
    CarrierInvoice,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 5] = [
        DocumentKind::Po,
        DocumentKind::Da,
        DocumentKind::Ra,
        DocumentKind::Ci,
        DocumentKind::CarrierInvoice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocumentKind::Po => "PO",
            DocumentKind::Da => "DA",
            DocumentKind::Ra => "RA",
            DocumentKind::Ci => "CI",
            DocumentKind::CarrierInvoice => "CARRIER_INVOICE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for DocumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LineItem {
    pub line_item_id: LineItemId,
    pub sku: String,
    /// PO.Q
    pub quantity: Quantity,
    /// PO.P
    pub unit_price: Money,
    pub supplier_id: OrgId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PurchaseOrder {
    pub po_id: PoId,
    pub shipper_id: OrgId,
    pub line_items: Vec<LineItem>,
}

impl PurchaseOrder {
    pub fn line(&self, id: &LineItemId) -> Option<&LineItem> {
        self.line_items.iter().find(|l| &l.line_item_id == id)
    }

    pub fn currency(&self) -> Option<Currency> {
        self.line_items.first().map(|l| l.unit_price.currency)
    }

    pub fn line_refs(&self) -> impl Iterator<Item = LineRef> + '_ {
        self.line_items.iter().map(|l| LineRef {
            po_id: self.po_id.clone(),
            line_item_id: l.line_item_id.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DespatchAdvice {
    pub da_id: DocId,
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    /// DA.Q
    pub quantity: Quantity,
    pub container_nos: Vec<ContainerNo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ReceivingAdvice {
    pub ra_id: DocId,
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    /// RA.Q
    pub accepted_quantity: Quantity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CommercialInvoice {
    pub ci_id: DocId,
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    /// CI.Q
    pub quantity: Quantity,
    /// CI.P
    pub unit_price: Money,
    pub supplier_id: OrgId,
}

impl CommercialInvoice {
    /// CI.Q·CI.P
    pub fn gross(&self) -> Result<Money, EdiError> {
        Ok(self.unit_price.checked_mul(self.quantity.signed())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CarrierRole {
    Ocm,
    OriginLand,
    Ocean,
    DestLand,
    Drayage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Allocation {
    pub po_id: PoId,
    pub line_item_id: LineItemId,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CarrierInvoice {
    pub invoice_id: DocId,
    pub carrier_id: OrgId,
    pub carrier_role: CarrierRole,
    pub container_no: ContainerNo,
    pub bol: Bol,
    pub total: Money,
    pub allocations: Vec<Allocation>,
}

impl CarrierInvoice {
    pub fn share_for(&self, line: &LineRef) -> impl Iterator<Item = &Allocation> + '_ {
        let line = line.clone();
        self.allocations
            .iter()
            .filter(move |a| a.po_id == line.po_id && a.line_item_id == line.line_item_id)
    }
}

/// Any document of the interchange format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdiDocument {
    PurchaseOrder(PurchaseOrder),
    DespatchAdvice(DespatchAdvice),
    ReceivingAdvice(ReceivingAdvice),
    CommercialInvoice(CommercialInvoice),
    CarrierInvoice(CarrierInvoice),
}

impl EdiDocument {
    pub fn kind(&self) -> DocumentKind {
        match self {
            EdiDocument::PurchaseOrder(_) => DocumentKind::Po,
            EdiDocument::DespatchAdvice(_) => DocumentKind::Da,
            EdiDocument::ReceivingAdvice(_) => DocumentKind::Ra,
            EdiDocument::CommercialInvoice(_) => DocumentKind::Ci,
            EdiDocument::CarrierInvoice(_) => DocumentKind::CarrierInvoice,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            EdiDocument::PurchaseOrder(d) => d.po_id.as_str(),
            EdiDocument::DespatchAdvice(d) => d.da_id.as_str(),
            EdiDocument::ReceivingAdvice(d) => d.ra_id.as_str(),
            EdiDocument::CommercialInvoice(d) => d.ci_id.as_str(),
            EdiDocument::CarrierInvoice(d) => d.invoice_id.as_str(),
        }
    }

    /// The line item the document belongs to, for per-line documents.
    pub fn line_ref(&self) -> Option<LineRef> {
        let (po, li) = match self {
            EdiDocument::DespatchAdvice(d) => (&d.po_id, &d.line_item_id),
            EdiDocument::ReceivingAdvice(d) => (&d.po_id, &d.line_item_id),
            EdiDocument::CommercialInvoice(d) => (&d.po_id, &d.line_item_id),
            _ => return None,
        };
        Some(LineRef {
            po_id: po.clone(),
            line_item_id: li.clone(),
        })
    }

    /// Checks the invariants that can be verified on the document alone.
    /// Cross-document references are checked when the document is matched.
    pub fn validate(&self) -> Result<(), EdiError> {
        match self {
            EdiDocument::PurchaseOrder(po) => validate_po(po),
            EdiDocument::DespatchAdvice(da) => {
                non_empty("daId", da.da_id.as_str())?;
                non_empty("poId", da.po_id.as_str())?;
                non_empty("lineItemId", da.line_item_id.as_str())
            }
            EdiDocument::ReceivingAdvice(ra) => {
                non_empty("raId", ra.ra_id.as_str())?;
                non_empty("poId", ra.po_id.as_str())?;
                non_empty("lineItemId", ra.line_item_id.as_str())
            }
            EdiDocument::CommercialInvoice(ci) => {
                non_empty("ciId", ci.ci_id.as_str())?;
                non_empty("poId", ci.po_id.as_str())?;
                non_empty("lineItemId", ci.line_item_id.as_str())?;
                if ci.unit_price.amount < 0 {
                    return Err(EdiError::validation("unitPrice", "must not be negative"));
                }
                Ok(())
            }
            EdiDocument::CarrierInvoice(inv) => validate_carrier_invoice(inv),
        }
    }
}

fn non_empty(field: &str, v: &str) -> Result<(), EdiError> {
    if v.is_empty() {
        return Err(EdiError::validation(field, "must not be empty"));
    }
    Ok(())
}

fn validate_po(po: &PurchaseOrder) -> Result<(), EdiError> {
    non_empty("poId", po.po_id.as_str())?;
    non_empty("shipperId", po.shipper_id.as_str())?;
    if po.line_items.is_empty() {
        return Err(EdiError::validation(
            "lineItems",
            "at least one line item required",
        ));
    }
    let currency = po.line_items[0].unit_price.currency;
    let mut seen = BTreeSet::new();
    for (i, line) in po.line_items.iter().enumerate() {
        let field = |f: &str| format!("lineItems[{i}].{f}");
        non_empty(&field("lineItemId"), line.line_item_id.as_str())?;
        if !seen.insert(&line.line_item_id) {
            return Err(EdiError::validation(
                field("lineItemId"),
                format!("duplicate line item id {}", line.line_item_id),
            ));
        }
        if line.quantity.0 == 0 {
            return Err(EdiError::validation(field("quantity"), "must be positive"));
        }
        if line.unit_price.amount < 0 {
            return Err(EdiError::validation(
                field("unitPrice"),
                "must not be negative",
            ));
        }
        if line.unit_price.currency != currency {
            return Err(EdiError::validation(
                field("unitPrice.currency"),
                "all line items of a PO share one currency",
            ));
        }
    }
    Ok(())
}

fn validate_carrier_invoice(inv: &CarrierInvoice) -> Result<(), EdiError> {
    non_empty("invoiceId", inv.invoice_id.as_str())?;
    non_empty("carrierId", inv.carrier_id.as_str())?;
    if inv.allocations.is_empty() {
        return Err(EdiError::validation(
            "allocations",
            "at least one allocation required",
        ));
    }
    for (i, a) in inv.allocations.iter().enumerate() {
        if a.amount.currency != inv.total.currency {
            return Err(EdiError::validation(
                format!("allocations[{i}].amount.currency"),
                "does not match invoice total currency",
            ));
        }
    }
    let sum = Money::sum(inv.total.currency, inv.allocations.iter().map(|a| &a.amount))?;
    if sum != inv.total {
        return Err(EdiError::validation(
            "allocations",
            format!("allocations sum to {sum} but total is {}", inv.total),
        ));
    }
    Ok(())
}
