//! Synthetic trade corpus: purchase orders with their despatch, receiving
//! and invoice documents, carrier invoices, and container tracking events.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::edi::{
    parse_any, serialize_document, Allocation, Bol, CarrierInvoice, CarrierRole, CommercialInvoice,
    ContainerNo, Currency, DespatchAdvice, DocId, EdiDocument, LineItem, LineItemId, LineRef, Money,
    OrgId, PoId, PurchaseOrder, Quantity, ReceivingAdvice,
};
use crate::events::{TrackingEvent, DISPATCHED_FROM_TRUCK, LOADED_ON_TRUCK, PACKED, PACKED_BY_FIELD};
use crate::payments::PackedBy;
use crate::time::Timestamp;

pub const SHIPPER: &str = "SHIPPER";
pub const OCM: &str = "OCM";

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: u64,
    pub max: u64,
}

impl Range {
    pub const fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(self.min..=self.max)
    }
}

/// Probability, per line item, of each injected discrepancy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DiscrepancyRates {
    /// CI.Q < PO.Q
    pub short: f64,
    /// CI.Q > PO.Q, drawn only for lines that are not short.
    pub excess: f64,
    /// CI.P > PO.P
    pub price_mismatch: f64,
    /// DA.Q < CI.Q
    pub despatch_shortfall: f64,
    /// RA.Q below what was received, min(DA.Q, PO.Q).
    pub damage: f64,
}

impl DiscrepancyRates {
    fn all(&self) -> [(&'static str, f64); 5] {
        [
            ("short", self.short),
            ("excess", self.excess),
            ("priceMismatch", self.price_mismatch),
            ("despatchShortfall", self.despatch_shortfall),
            ("damage", self.damage),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_pos: usize,
    /// Drawn uniformly per purchase order.
    pub line_items_per_po: Range,
    pub discrepancy_rates: DiscrepancyRates,
    /// PO.Q
    pub quantity: Range,
    /// PO.P in cents.
    pub unit_price_cents: Range,
    /// Each carrier's charge for one container, in cents.
    pub freight_cents: Range,
    pub lines_per_container: usize,
    pub suppliers: usize,
    pub land_carriers: usize,
    pub ocean_carriers: usize,
    /// Share of containers packed by the consolidator rather than the
    /// supplier.
    pub ocm_packed_rate: f64,
    pub currency: String,
    pub start: Timestamp,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_pos: 100,
            line_items_per_po: Range::new(1, 5),
            discrepancy_rates: DiscrepancyRates {
                short: 0.1,
                excess: 0.05,
                price_mismatch: 0.1,
                despatch_shortfall: 0.1,
                damage: 0.1,
            },
            quantity: Range::new(10, 500),
            unit_price_cents: Range::new(100, 50_000),
            freight_cents: Range::new(10_000, 300_000),
            lines_per_container: 3,
            suppliers: 4,
            land_carriers: 2,
            ocean_carriers: 2,
            ocm_packed_rate: 0.5,
            currency: "USD".into(),
            start: Timestamp(1_700_000_000_000),
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<Currency, BenchError> {
        let bad = |m: String| Err(BenchError::InvalidSpec(m));
        for (name, p) in self.discrepancy_rates.all() {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("discrepancy rate {name} = {p} is not a probability"));
            }
        }
        if !(0.0..=1.0).contains(&self.ocm_packed_rate) {
            return bad(format!("ocmPackedRate = {} is not a probability", self.ocm_packed_rate));
        }
        for (name, r) in [
            ("lineItemsPerPo", self.line_items_per_po),
            ("quantity", self.quantity),
            ("unitPriceCents", self.unit_price_cents),
            ("freightCents", self.freight_cents),
        ] {
            if r.min > r.max {
                return bad(format!("{name}: min {} exceeds max {}", r.min, r.max));
            }
        }
        // short, shortfall and damage each take at least one unit away
        if self.quantity.min < 4 {
            return bad("quantity.min must be at least 4".into());
        }
        if self.line_items_per_po.min == 0 || self.unit_price_cents.min == 0 {
            return bad("line items and prices must be positive".into());
        }
        if self.lines_per_container == 0 || self.suppliers == 0 || self.land_carriers == 0 || self.ocean_carriers == 0 {
            return bad("container size and org counts must be positive".into());
        }
        self.currency
            .parse()
            .map_err(|e| BenchError::InvalidSpec(format!("currency: {e}")))
    }
}

/// A container to register with the lines it carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShipmentPlan {
    pub bol: Bol,
    pub container_no: ContainerNo,
    pub lines: Vec<LineRef>,
    pub packed_by: PackedBy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub purchase_orders: Vec<PurchaseOrder>,
    pub despatch_advices: Vec<DespatchAdvice>,
    pub commercial_invoices: Vec<CommercialInvoice>,
    pub receiving_advices: Vec<ReceivingAdvice>,
    pub carrier_invoices: Vec<CarrierInvoice>,
    pub shipments: Vec<ShipmentPlan>,
    pub events: Vec<TrackingEvent>,
}

fn pick(rng: &mut ChaCha8Rng, p: f64) -> bool {
    // always draw so the stream does not depend on the rates
    let x: f64 = rng.gen();
    x < p
}

/// At least one unit, at most a fifth of `q` (never all of it).
fn cut(rng: &mut ChaCha8Rng, q: u64) -> u64 {
    rng.gen_range(1..=(q / 5).max(1)).min(q - 1)
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, BenchError> {
    let currency = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let money = |cents: u64| Money::new(cents as i64, currency);
    let rates = spec.discrepancy_rates;
    let mut c = Corpus {
        purchase_orders: Vec::new(),
        despatch_advices: Vec::new(),
        commercial_invoices: Vec::new(),
        receiving_advices: Vec::new(),
        carrier_invoices: Vec::new(),
        shipments: Vec::new(),
        events: Vec::new(),
    };

    for i in 0..spec.num_pos {
        let po_id = PoId::new(format!("PO{i:05}"));
        let bol = Bol::new(format!("BOL{i:05}"));
        let supplier = OrgId::new(format!("SUP{:02}", rng.gen_range(0..spec.suppliers)));
        let n = spec.line_items_per_po.draw(&mut rng) as usize;
        let mut items = Vec::with_capacity(n);
        for j in 0..n {
            let li = LineItemId::new(format!("L{}", j + 1));
            let po_q = spec.quantity.draw(&mut rng);
            let po_p = spec.unit_price_cents.draw(&mut rng);
            let short = pick(&mut rng, rates.short);
            let excess = pick(&mut rng, rates.excess);
            let price = pick(&mut rng, rates.price_mismatch);
            let shortfall = pick(&mut rng, rates.despatch_shortfall);
            let damage = pick(&mut rng, rates.damage);
            let ci_q = if short {
                po_q - cut(&mut rng, po_q)
            } else if excess {
                po_q + rng.gen_range(1..=(po_q / 5).max(1))
            } else {
                po_q
            };
            let ci_p = if price { po_p + rng.gen_range(1..=(po_p / 10).max(1)) } else { po_p };
            let da_q = if shortfall { ci_q - cut(&mut rng, ci_q) } else { ci_q };
            // units beyond the order are refused at receipt
            let received = da_q.min(po_q);
            let ra_q = if damage { received - cut(&mut rng, received) } else { received };
            let tag = format!("{}-{}", po_id, li);
            items.push(LineItem {
                line_item_id: li.clone(),
                sku: format!("SKU{:05}", rng.gen_range(0..100_000)),
                quantity: Quantity(po_q),
                unit_price: money(po_p),
                supplier_id: supplier.clone(),
            });
            c.commercial_invoices.push(CommercialInvoice {
                ci_id: DocId::new(format!("CI-{tag}")),
                po_id: po_id.clone(),
                line_item_id: li.clone(),
                quantity: Quantity(ci_q),
                unit_price: money(ci_p),
                supplier_id: supplier.clone(),
            });
            c.despatch_advices.push(DespatchAdvice {
                da_id: DocId::new(format!("DA-{tag}")),
                po_id: po_id.clone(),
                line_item_id: li.clone(),
                quantity: Quantity(da_q),
                // filled in once containers are assigned
                container_nos: Vec::new(),
            });
            c.receiving_advices.push(ReceivingAdvice {
                ra_id: DocId::new(format!("RA-{tag}")),
                po_id: po_id.clone(),
                line_item_id: li,
                accepted_quantity: Quantity(ra_q),
            });
        }
        let first_da = c.despatch_advices.len() - n;
        let po = PurchaseOrder {
            po_id: po_id.clone(),
            shipper_id: SHIPPER.into(),
            line_items: items,
        };

        let lines: Vec<LineRef> = po.line_refs().collect();
        let base = spec.start.as_millis() + i as u64 * 60_000;
        for (k, chunk) in lines.chunks(spec.lines_per_container).enumerate() {
            let container = ContainerNo::new(format!("CN{i:05}{k:02}"));
            for (o, _) in chunk.iter().enumerate() {
                let da = &mut c.despatch_advices[first_da + k * spec.lines_per_container + o];
                da.container_nos.push(container.clone());
            }
            let carriers = [
                (OrgId::from(OCM), CarrierRole::Ocm),
                (
                    OrgId::new(format!("LAND{:02}", rng.gen_range(0..spec.land_carriers))),
                    CarrierRole::OriginLand,
                ),
                (
                    OrgId::new(format!("OCEAN{:02}", rng.gen_range(0..spec.ocean_carriers))),
                    CarrierRole::Ocean,
                ),
            ];
            for (carrier, role) in carriers {
                let total = spec.freight_cents.draw(&mut rng);
                let share = total / chunk.len() as u64;
                let allocations = chunk
                    .iter()
                    .enumerate()
                    .map(|(o, l)| Allocation {
                        po_id: l.po_id.clone(),
                        line_item_id: l.line_item_id.clone(),
                        amount: money(if o + 1 == chunk.len() {
                            total - share * (chunk.len() as u64 - 1)
                        } else {
                            share
                        }),
                    })
                    .collect();
                c.carrier_invoices.push(CarrierInvoice {
                    invoice_id: DocId::new(format!("FI-{carrier}-{container}")),
                    carrier_id: carrier,
                    carrier_role: role,
                    container_no: container.clone(),
                    bol: bol.clone(),
                    total: money(total),
                    allocations,
                });
            }
            let packed_by = if pick(&mut rng, spec.ocm_packed_rate) { PackedBy::Ocm } else { PackedBy::Supplier };
            let t = base + k as u64 * 1_000;
            for (n, (ty, at)) in [
                (PACKED, t),
                (LOADED_ON_TRUCK, t + 3_600_000),
                (DISPATCHED_FROM_TRUCK, t + 20 * 86_400_000),
            ]
            .into_iter()
            .enumerate()
            {
                let payload: BTreeMap<String, String> = if ty == PACKED {
                    [(PACKED_BY_FIELD.to_string(), packed_by.as_str().to_string())].into()
                } else {
                    BTreeMap::new()
                };
                c.events.push(TrackingEvent {
                    event_id: format!("EV-{container}-{n}"),
                    bol: bol.clone(),
                    container_no: container.clone(),
                    event_type: ty.to_string(),
                    occurred_at: Timestamp(at),
                    payload,
                });
            }
            c.shipments.push(ShipmentPlan {
                bol: bol.clone(),
                container_no: container,
                lines: chunk.to_vec(),
                packed_by,
            });
        }
        c.purchase_orders.push(po);
    }
    c.events.sort_by(|a, b| a.occurred_at.cmp(&b.occurred_at).then_with(|| a.event_id.cmp(&b.event_id)));
    Ok(c)
}

impl Corpus {
    /// Every ⟨PO, line item⟩ in purchase order order.
    pub fn tuples(&self) -> Vec<LineRef> {
        self.purchase_orders.iter().flat_map(|po| po.line_refs()).collect()
    }

    /// Every org that appears as shipper, supplier or carrier.
    pub fn orgs(&self) -> Vec<OrgId> {
        let mut s = BTreeSet::new();
        for po in &self.purchase_orders {
            s.insert(po.shipper_id.clone());
            s.extend(po.line_items.iter().map(|l| l.supplier_id.clone()));
        }
        s.extend(self.carrier_invoices.iter().map(|i| i.carrier_id.clone()));
        s.into_iter().collect()
    }

    /// Documents in an order the contracts accept them: purchase orders,
    /// then per-line documents, then carrier invoices.
    pub fn documents(&self) -> Vec<EdiDocument> {
        let mut out: Vec<EdiDocument> = Vec::new();
        out.extend(self.purchase_orders.iter().cloned().map(EdiDocument::PurchaseOrder));
        out.extend(self.despatch_advices.iter().cloned().map(EdiDocument::DespatchAdvice));
        out.extend(self.commercial_invoices.iter().cloned().map(EdiDocument::CommercialInvoice));
        out.extend(self.receiving_advices.iter().cloned().map(EdiDocument::ReceivingAdvice));
        out.extend(self.carrier_invoices.iter().cloned().map(EdiDocument::CarrierInvoice));
        out
    }

    pub fn document_count(&self) -> usize {
        self.purchase_orders.len()
            + self.despatch_advices.len()
            + self.commercial_invoices.len()
            + self.receiving_advices.len()
            + self.carrier_invoices.len()
    }

    /// Writes `documents.jsonl`, `shipments.json` and `events.jsonl`.
    pub fn write_to(&self, dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(dir)?;
        let mut docs = fs::File::create(dir.join(DOCUMENTS_FILE))?;
        for d in self.documents() {
            docs.write_all(&serialize_document(&d))?;
            docs.write_all(b"\n")?;
        }
        let shipments = serde_json::to_vec_pretty(&self.shipments)?;
        fs::write(dir.join(SHIPMENTS_FILE), shipments)?;
        let mut events = fs::File::create(dir.join(EVENTS_FILE))?;
        for e in &self.events {
            serde_json::to_writer(&mut events, e)?;
            events.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from(dir: &Path) -> Result<Self, BenchError> {
        let mut c = Corpus {
            purchase_orders: Vec::new(),
            despatch_advices: Vec::new(),
            commercial_invoices: Vec::new(),
            receiving_advices: Vec::new(),
            carrier_invoices: Vec::new(),
            shipments: serde_json::from_slice(&fs::read(dir.join(SHIPMENTS_FILE))?)?,
            events: Vec::new(),
        };
        for line in BufReader::new(fs::File::open(dir.join(DOCUMENTS_FILE))?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_any(line.as_bytes()).map_err(|e| BenchError::Corpus(e.to_string()))? {
                EdiDocument::PurchaseOrder(d) => c.purchase_orders.push(d),
                EdiDocument::DespatchAdvice(d) => c.despatch_advices.push(d),
                EdiDocument::CommercialInvoice(d) => c.commercial_invoices.push(d),
                EdiDocument::ReceivingAdvice(d) => c.receiving_advices.push(d),
                EdiDocument::CarrierInvoice(d) => c.carrier_invoices.push(d),
            }
        }
        for line in BufReader::new(fs::File::open(dir.join(EVENTS_FILE))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                c.events.push(serde_json::from_str(&line)?);
            }
        }
        Ok(c)
    }
}

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const SHIPMENTS_FILE: &str = "shipments.json";
pub const EVENTS_FILE: &str = "events.jsonl";
