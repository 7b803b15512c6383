//! Payment advices for one line packed by the ocean carrier's consolidator,
//! then a carrier disputes its advice and the shipper finalizes it.

use goods_ap::claims::{compute_ca, PoLine};
use goods_ap::edi::{
    Allocation, CarrierInvoice, CarrierRole, CommercialInvoice, Currency, DespatchAdvice, LineItem, Money,
    PurchaseOrder, Quantity, ReceivingAdvice,
};
use goods_ap::lifecycle::{finalize_payment, raise_dispute, resolve_dispute, LineParties, Participant, TargetMut, Verdict};
use goods_ap::payments::{compute_pas, PackedBy, PayeeRole, RouteToPacker};
use goods_ap::time::Timestamp;

fn freight(id: &str, carrier: &str, role: CarrierRole, cents: i64) -> CarrierInvoice {
    CarrierInvoice {
        invoice_id: id.into(),
        carrier_id: carrier.into(),
        carrier_role: role,
        container_no: "MSCU1234565".into(),
        bol: "BOL-77".into(),
        total: Money::new(cents, Currency::USD),
        allocations: vec![Allocation {
            po_id: "PO-1".into(),
            line_item_id: "10".into(),
            amount: Money::new(cents, Currency::USD),
        }],
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let usd = |c| Money::new(c, Currency::USD);
    let po = PurchaseOrder {
        po_id: "PO-1".into(),
        shipper_id: "ACME-RETAIL".into(),
        line_items: vec![LineItem {
            line_item_id: "10".into(),
            sku: "KETTLE-2L".into(),
            quantity: Quantity(100),
            unit_price: usd(1000),
            supplier_id: "SHENZHEN-HOME".into(),
        }],
    };
    let da = DespatchAdvice {
        da_id: "DA-1".into(),
        po_id: "PO-1".into(),
        line_item_id: "10".into(),
        quantity: Quantity(100),
        container_nos: vec!["MSCU1234565".into()],
    };
    let ci = CommercialInvoice {
        ci_id: "CI-1".into(),
        po_id: "PO-1".into(),
        line_item_id: "10".into(),
        quantity: Quantity(100),
        unit_price: usd(1000),
        supplier_id: "SHENZHEN-HOME".into(),
    };
    // six kettles arrived broken
    let ra = ReceivingAdvice {
        ra_id: "RA-1".into(),
        po_id: "PO-1".into(),
        line_item_id: "10".into(),
        accepted_quantity: Quantity(94),
    };
    let invoices = [
        freight("F-1", "YANTIAN-CFS", CarrierRole::Ocm, 25_000),
        freight("F-2", "GD-TRUCKING", CarrierRole::OriginLand, 12_000),
        freight("F-3", "BLUE-OCEAN", CarrierRole::Ocean, 80_000),
    ];
    let now = Timestamp(1_700_000_000_000);
    let ca = compute_ca(PoLine::of(&po, &"10".into())?, &da, &ra, &ci, now)?;
    let mut pas = compute_pas(&ci, &invoices, &ca, PackedBy::Ocm, &RouteToPacker, now)?;
    for pa in &pas {
        println!(
            "{:<12} {:?}: gross {} net {} ({})",
            pa.payee_id, pa.payee_role, pa.gross_amount, pa.net_amount, pa.state
        );
    }

    let mut parties = LineParties::new("ACME-RETAIL".into(), "SHENZHEN-HOME".into());
    for inv in &invoices {
        parties.carriers.insert(inv.carrier_id.clone(), inv.carrier_role);
    }
    let shipper = Participant::new("jane", "ACME-RETAIL");
    let ocm = pas.iter_mut().find(|p| p.payee_role == PayeeRole::Ocm).ok_or("no OCM advice")?;
    let mut dispute = raise_dispute(
        TargetMut::Payment(ocm),
        None,
        Participant::new("li", "YANTIAN-CFS"),
        &parties,
        "D-1".into(),
        "container was sealed intact at the CFS".into(),
        None,
        now,
    )?;
    resolve_dispute(&mut dispute, TargetMut::Payment(ocm), shipper.clone(), &parties, Verdict::Reject, now)?;
    finalize_payment(ocm, Some(&dispute), shipper, &parties, now)?;
    println!("dispute {} {:?}; OCM advice now {}", dispute.dispute_id, dispute.status, ocm.state);
    for step in &ocm.history {
        println!("  {} -> {} by {} ({:?})", step.from, step.to, step.by, step.action);
    }
    Ok(())
}
