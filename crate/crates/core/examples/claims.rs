//! Claim advice for one short delivery, computed in two passes.

use goods_ap::claims::{compute_pass1, compute_pass2, total_claim, PoLine};
use goods_ap::edi::{
    CommercialInvoice, Currency, DespatchAdvice, LineItem, Money, PurchaseOrder, Quantity, ReceivingAdvice,
};
use goods_ap::time::Timestamp;

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
        quantity: Quantity(85),
        container_nos: vec!["MSCU1234565".into()],
    };
    let ci = CommercialInvoice {
        ci_id: "CI-1".into(),
        po_id: "PO-1".into(),
        line_item_id: "10".into(),
        quantity: Quantity(90),
        unit_price: usd(1200),
        supplier_id: "SHENZHEN-HOME".into(),
    };
    let ra = ReceivingAdvice {
        ra_id: "RA-1".into(),
        po_id: "PO-1".into(),
        line_item_id: "10".into(),
        accepted_quantity: Quantity(80),
    };
    let line = PoLine::of(&po, &"10".into())?;
    let loaded = Timestamp(1_700_000_000_000);

    let pass1 = compute_pass1(line, &da, &ci, loaded)?;
    println!("after loading ({:?}):", pass1.scenario);
    for c in pass1.claims.values() {
        println!("  {:?} {} {}", c.category, c.amount, c.state);
    }

    let delivered = Timestamp(loaded.0 + 20 * 24 * 3600 * 1000);
    let ca = compute_pass2(&pass1, line, &ra, delivered)?;
    println!("after delivery:");
    for c in ca.claims.values() {
        println!("  {:?} {} {}", c.category, c.amount, c.state);
    }
    println!("total claim {}", total_claim(&ca)?);
    Ok(())
}
