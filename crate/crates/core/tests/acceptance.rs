//! Acceptance criteria, one test per criterion. Each test writes a single
//! `PASS`/`FAIL` line straight to stderr (libtest does not capture direct
//! handle writes) and then fails the usual way if the criterion failed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use goods_ap::bench::{
    generate_corpus, populate, prepare, sweep, Corpus, CorpusSpec, LoadConfig, Range, SweepKind, SweepResult,
    SweepRow, TopologySpec, TransactionMix, TxKind,
};
use goods_ap::chaincode::{self, keys, ChaincodeConfig};
use goods_ap::claims::{compute_ca, compute_pass1, compute_pass2, total_claim, ClaimAdvice, ClaimCategory, PoLine, Scenario};
use goods_ap::edi::{
    serialize_document, Allocation, CarrierInvoice, CarrierRole, CommercialInvoice, Currency, DespatchAdvice,
    EdiDocument, LineItem, LineRef, Money, OrgId, PurchaseOrder, Quantity, ReceivingAdvice,
};
use goods_ap::gateway::{http, Gateway, GatewayConfig, GatewayError, Role, UserAccount};
use goods_ap::ledger::{
    verify_log, verify_records, BlockLog, BlockRecord, CutterConfig, EndorsementPolicy, Ledger, LedgerConfig,
    LedgerError, NetworkTopology, StateView, TimeMode, TxRequest, TxValidity,
};
use goods_ap::lifecycle::{
    self, claim_transition, finalize_payment, payment_transition, raise_dispute, Action, ActorRole, AdviceState,
    Dispute, DisputeStatus, LifecycleError, LineParties, Participant, TargetMut,
};
use goods_ap::payments::{compute_pas, PackedBy, PayeeRole, PaymentAdvice, RouteToPacker};
use goods_ap::time::{Clock, ManualClock, Timestamp};

fn report(criterion: &str, outcome: Result<String, String>) {
    let line = match &outcome {
        Ok(detail) => format!("PASS {criterion}: {detail}"),
        Err(why) => format!("FAIL {criterion}: {why}"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let Err(why) = outcome {
        panic!("{criterion}: {why}");
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn usd(c: i64) -> Money {
    Money::new(c, Currency::USD)
}

struct Tuple {
    po: PurchaseOrder,
    da: DespatchAdvice,
    ra: ReceivingAdvice,
    ci: CommercialInvoice,
}

impl Tuple {
    fn new(po_q: u64, po_p: i64, ci_q: u64, ci_p: i64, da_q: u64, ra_q: u64) -> Self {
        Tuple {
            po: PurchaseOrder {
                po_id: "PO1".into(),
                shipper_id: "SHIPPER".into(),
                line_items: vec![LineItem {
                    line_item_id: "L1".into(),
                    sku: "SKU-1".into(),
                    quantity: Quantity(po_q),
                    unit_price: usd(po_p),
                    supplier_id: "SUPPLIER".into(),
                }],
            },
            da: DespatchAdvice {
                da_id: "DA1".into(),
                po_id: "PO1".into(),
                line_item_id: "L1".into(),
                quantity: Quantity(da_q),
                container_nos: vec!["C1".into()],
            },
            ra: ReceivingAdvice {
                ra_id: "RA1".into(),
                po_id: "PO1".into(),
                line_item_id: "L1".into(),
                accepted_quantity: Quantity(ra_q),
            },
            ci: CommercialInvoice {
                ci_id: "CI1".into(),
                po_id: "PO1".into(),
                line_item_id: "L1".into(),
                quantity: Quantity(ci_q),
                unit_price: usd(ci_p),
                supplier_id: "SUPPLIER".into(),
            },
        }
    }

    /// PO.Q in [1, 10^4], prices in [1, 10^6] cents, DA.Q and CI.Q in
    /// [0, 2·PO.Q], RA.Q in [0, min(DA.Q, PO.Q)].
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let po_q = rng.gen_range(1..=10_000u64);
        let po_p = rng.gen_range(1..=1_000_000i64);
        let ci_p = rng.gen_range(1..=1_000_000i64);
        let da_q = rng.gen_range(0..=2 * po_q);
        let ci_q = rng.gen_range(0..=2 * po_q);
        let ra_q = rng.gen_range(0..=da_q.min(po_q));
        Self::new(po_q, po_p, ci_q, ci_p, da_q, ra_q)
    }

    fn line(&self) -> PoLine<'_> {
        PoLine::of(&self.po, &"L1".into()).unwrap()
    }

    /// CI.Q·CI.P − RA.Q·PO.P, in wide integers.
    fn identity(&self) -> i128 {
        self.ci.quantity.0 as i128 * self.ci.unit_price.amount as i128
            - self.ra.accepted_quantity.0 as i128 * self.po.line_items[0].unit_price.amount as i128
    }

    /// (min(DA.Q, PO.Q) − RA.Q)·PO.P
    fn damage(&self) -> i64 {
        let item = &self.po.line_items[0];
        (self.da.quantity.0.min(item.quantity.0) - self.ra.accepted_quantity.0) as i64 * item.unit_price.amount
    }
}

fn category_amounts(ca: &ClaimAdvice) -> Vec<i64> {
    let first = match ca.scenario {
        Scenario::Short => ClaimCategory::ShortDelivery,
        Scenario::Excess => ClaimCategory::ExcessDelivery,
    };
    [first, ClaimCategory::PriceDiscrepancy, ClaimCategory::GoodsNotDelivered, ClaimCategory::TransportDamage]
        .iter()
        .map(|c| ca.claims.get(c).map_or(i64::MIN, |claim| claim.amount.amount))
        .collect()
}

const TUPLES: usize = 10_000;
const T0: Timestamp = Timestamp(1_700_000_000_000);

#[test]
fn claim_identity_holds_over_ten_thousand_tuples() {
    let started = Instant::now();
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
        let (mut short, mut excess) = (0, 0);
        for i in 0..TUPLES {
            let t = Tuple::random(&mut rng);
            let ca = compute_ca(t.line(), &t.da, &t.ra, &t.ci, T0).map_err(|e| format!("tuple {i}: {e}"))?;
            let total = total_claim(&ca).map_err(|e| format!("tuple {i}: {e}"))?;
            ensure(total.amount as i128 == t.identity(), || {
                format!("tuple {i}: total {} but CI.Q·CI.P − RA.Q·PO.P = {}", total.amount, t.identity())
            })?;
            match ca.scenario {
                Scenario::Short => short += 1,
                Scenario::Excess => excess += 1,
            }
        }
        ensure(short > 1000 && excess > 1000, || format!("scenario mix too thin: {short} short, {excess} excess"))?;
        let elapsed = started.elapsed();
        ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
        Ok(format!("{TUPLES} tuples ({short} SHORT, {excess} EXCESS) exact in {elapsed:.2?}"))
    })();
    report("claim identity", outcome);
}

#[test]
fn worked_examples_match_the_identity_oracle() {
    let outcome = (|| {
        let mut lines = Vec::new();
        // (PO.Q, PO.P, CI.Q, CI.P, DA.Q, RA.Q), expected category amounts, expected total
        let cases: [(&str, Tuple, [i64; 4], i64); 2] = [
            ("SHORT", Tuple::new(100, 1000, 90, 1200, 85, 80), [0, 18_000, 5_000, 5_000], 28_000),
            ("EXCESS", Tuple::new(100, 1000, 110, 900, 120, 95), [10_000, -11_000, 0, 5_000], 4_000),
        ];
        for (name, t, want, want_total) in cases {
            let ca = compute_ca(t.line(), &t.da, &t.ra, &t.ci, T0).map_err(|e| e.to_string())?;
            let got = category_amounts(&ca);
            ensure(got == want, || format!("{name}: categories {got:?}, expected {want:?}"))?;
            let total = total_claim(&ca).map_err(|e| e.to_string())?.amount;
            ensure(total == want_total && total as i128 == t.identity(), || {
                format!("{name}: total {total}, expected {want_total}, identity {}", t.identity())
            })?;
            lines.push(format!("{name} {got:?} total {total}"));
        }
        Ok(lines.join("; "))
    })();
    report("worked examples", outcome);
}

#[test]
fn two_pass_generation_equals_single_shot() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
        for i in 0..TUPLES {
            let t = Tuple::random(&mut rng);
            let pass1 = compute_pass1(t.line(), &t.da, &t.ci, T0).map_err(|e| format!("tuple {i}: {e}"))?;
            let two = compute_pass2(&pass1, t.line(), &t.ra, T0).map_err(|e| format!("tuple {i}: {e}"))?;
            let one = compute_ca(t.line(), &t.da, &t.ra, &t.ci, T0).map_err(|e| format!("tuple {i}: {e}"))?;
            ensure(two == one, || format!("tuple {i}: two-pass {two:?} differs from single-shot {one:?}"))?;
        }
        Ok(format!("{TUPLES} tuples identical field for field"))
    })();
    report("two-pass equivalence", outcome);
}

fn carrier_invoice(id: &str, carrier: &str, role: CarrierRole, mine: i64, other: i64) -> CarrierInvoice {
    CarrierInvoice {
        invoice_id: id.into(),
        carrier_id: carrier.into(),
        carrier_role: role,
        container_no: "C1".into(),
        bol: "B1".into(),
        total: usd(mine + other),
        allocations: vec![
            Allocation {
                po_id: "PO1".into(),
                line_item_id: "L1".into(),
                amount: usd(mine),
            },
            // a share of another line on the same invoice must be ignored
            Allocation {
                po_id: "PO2".into(),
                line_item_id: "L1".into(),
                amount: usd(other),
            },
        ],
    }
}

fn net_of(pas: &[PaymentAdvice], role: PayeeRole) -> Option<(i64, i64)> {
    pas.iter()
        .find(|p| p.payee_role == role)
        .map(|p| (p.gross_amount.amount, p.net_amount.amount))
}

#[test]
fn payment_advices_conserve_the_claim() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(7_001);
        let mut checked = 0;
        for i in 0..1_000 {
            let t = Tuple::random(&mut rng);
            let ca = compute_ca(t.line(), &t.da, &t.ra, &t.ci, T0).map_err(|e| format!("scenario {i}: {e}"))?;
            let ocm = rng.gen_range(0..=500_000);
            let land = rng.gen_range(0..=500_000);
            let ocean = rng.gen_range(0..=500_000);
            let invoices = vec![
                carrier_invoice("F1", "OCM-CO", CarrierRole::Ocm, ocm, rng.gen_range(0..=1000)),
                carrier_invoice("F2", "LAND-CO", CarrierRole::OriginLand, land, rng.gen_range(0..=1000)),
                carrier_invoice("F3", "OCEAN-CO", CarrierRole::Ocean, ocean, rng.gen_range(0..=1000)),
            ];
            for packed in [PackedBy::Supplier, PackedBy::Ocm] {
                let pas = compute_pas(&t.ci, &invoices, &ca, packed, &RouteToPacker, T0)
                    .map_err(|e| format!("scenario {i} {packed}: {e}"))?;
                let deducted: i128 = pas
                    .iter()
                    .map(|p| (p.gross_amount.amount - p.net_amount.amount) as i128)
                    .sum();
                ensure(deducted == t.identity(), || {
                    format!("scenario {i} {packed}: Σ(gross − net) = {deducted}, identity {}", t.identity())
                })?;
                let po_p = t.po.line_items[0].unit_price.amount;
                let ra_q = t.ra.accepted_quantity.0 as i64;
                let ci_gross = t.ci.quantity.0 as i64 * t.ci.unit_price.amount;
                let (s_gross, s_net) = net_of(&pas, PayeeRole::Supplier).ok_or("no supplier PA")?;
                let (o_gross, o_net) = net_of(&pas, PayeeRole::Ocm).ok_or("no OCM PA")?;
                ensure(s_gross == ci_gross && o_gross == ocm, || format!("scenario {i}: gross amounts {s_gross}, {o_gross}"))?;
                match packed {
                    PackedBy::Supplier => {
                        ensure(s_net == ra_q * po_p, || {
                            format!("scenario {i}: supplier net {s_net}, RA.Q·PO.P = {}", ra_q * po_p)
                        })?;
                        ensure(o_net == ocm, || format!("scenario {i}: OCM charged {} with supplier packing", ocm - o_net))?;
                    }
                    PackedBy::Ocm => {
                        ensure(o_net == ocm - t.damage(), || {
                            format!("scenario {i}: OCM net {o_net}, gross {ocm} less damage {}", t.damage())
                        })?;
                        ensure(s_net == ra_q * po_p + t.damage(), || format!("scenario {i}: supplier net {s_net}"))?;
                    }
                }
                ensure(net_of(&pas, PayeeRole::OriginLand) == Some((land, land)), || format!("scenario {i}: land PA"))?;
                ensure(net_of(&pas, PayeeRole::Ocean) == Some((ocean, ocean)), || format!("scenario {i}: ocean PA"))?;
                checked += 1;
            }
        }
        Ok(format!("{checked} PA sets (1000 scenarios × 2 packers) conserve the total claim"))
    })();
    report("PA conservation", outcome);
}

fn parties() -> LineParties {
    let mut p = LineParties::new("SHIPPER".into(), "SUPPLIER".into());
    p.carriers.insert("OCM-CO".into(), CarrierRole::Ocm);
    p.carriers.insert("LAND-CO".into(), CarrierRole::OriginLand);
    p
}

fn auto_approve_through_the_gateway() -> Result<String, String> {
    let period = Duration::from_secs(3600);
    let corpus = generate_corpus(&CorpusSpec {
        num_pos: 1,
        ..CorpusSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let net = Network::new(&corpus, period, None)?;
    net.load_to_pass1(&corpus)?;
    let line = corpus.tuples()[0].clone();
    let shipper = net.user(SHIPPER_AP);
    let view = net.gw.claim_advice(&shipper, line.po_id.as_str(), line.line_item_id.as_str()).map_err(|e| e.to_string())?;
    let issued = view
        .categories
        .iter()
        .filter(|c| c.state == AdviceState::Open)
        .filter_map(|c| c.issued_at)
        .max()
        .ok_or("no OPEN claims after pass 1")?;
    net.clock.set(issued.saturating_add(period).saturating_sub(Duration::from_millis(1)));
    let early = net.gw.run_auto_approve();
    ensure(early.submitted == 0, || format!("auto-approve submitted {} one millisecond early", early.submitted))?;
    net.clock.set(issued.saturating_add(period));
    let due = net.gw.run_auto_approve();
    ensure(due.committed == 1, || format!("auto-approve at the deadline: {due:?}"))?;
    let view = net.gw.claim_advice(&shipper, line.po_id.as_str(), line.line_item_id.as_str()).map_err(|e| e.to_string())?;
    for c in view.categories.iter().filter(|c| c.issued_at == Some(issued)) {
        let step = c.history.last().ok_or("no history")?;
        ensure(c.state == AdviceState::Aa && step.action == Action::AutoApprove, || format!("{:?} is {}", c.category, c.state))?;
        ensure(step.at == issued.saturating_add(period), || format!("approved at {:?}, deadline {:?}", step.at, issued.saturating_add(period)))?;
    }
    Ok(format!("gateway job idle at issuedAt+{}s−1ms, approves at issuedAt+{}s", period.as_secs(), period.as_secs()))
}

#[test]
fn advice_state_machines_are_exactly_the_published_ones() {
    let outcome = (|| {
        use AdviceState::*;
        let parties_roles = [ActorRole::Shipper, ActorRole::Supplier, ActorRole::Carrier];
        let claim_edges: BTreeSet<(AdviceState, AdviceState)> = [(Cip, Open), (Open, Ar), (Ar, Ma), (Open, Aa)].into();
        let pa_edges: BTreeSet<(AdviceState, AdviceState)> = [(Cip, Ar), (Ar, Ma)].into();
        let mut seen_claim = BTreeSet::new();
        let mut seen_pa = BTreeSet::new();
        let mut triples = 0;
        for from in AdviceState::ALL {
            for action in Action::ALL {
                for role in ActorRole::ALL {
                    triples += 1;
                    let claim_ok = match (from, action) {
                        (Cip, Action::Issue) | (Open, Action::AutoApprove) => role == ActorRole::System,
                        (Open, Action::RaiseDispute) | (Ar, Action::ResolveDispute) => parties_roles.contains(&role),
                        _ => false,
                    };
                    match claim_transition(from, action, role) {
                        Ok(to) => {
                            ensure(claim_ok, || format!("claim {from} {action:?} by {role:?} accepted"))?;
                            seen_claim.insert((from, to));
                        }
                        Err(_) => ensure(!claim_ok, || format!("claim {from} {action:?} by {role:?} rejected"))?,
                    }
                    let pa_ok = matches!(
                        (from, action, role),
                        (Cip, Action::Issue, ActorRole::System) | (Ar, Action::Finalize, ActorRole::Shipper)
                    );
                    match payment_transition(from, action, role) {
                        Ok(to) => {
                            ensure(pa_ok, || format!("PA {from} {action:?} by {role:?} accepted"))?;
                            seen_pa.insert((from, to));
                        }
                        Err(_) => ensure(!pa_ok, || format!("PA {from} {action:?} by {role:?} rejected"))?,
                    }
                }
            }
        }
        ensure(seen_claim == claim_edges, || format!("claim edges {seen_claim:?}"))?;
        ensure(seen_pa == pa_edges, || format!("PA edges {seen_pa:?}"))?;

        // disputes after finalization, for every party and many advices
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = parties();
        let raisers = [
            Participant::new("ap", "SHIPPER"),
            Participant::new("ar", "SUPPLIER"),
            Participant::new("ocm", "OCM-CO"),
            Participant::new("land", "LAND-CO"),
        ];
        let mut rejected = 0;
        for i in 0..200 {
            let t = Tuple::random(&mut rng);
            let ca = compute_ca(t.line(), &t.da, &t.ra, &t.ci, T0).map_err(|e| e.to_string())?;
            let invoices = [
                carrier_invoice("F1", "OCM-CO", CarrierRole::Ocm, 1_000, 0),
                carrier_invoice("F2", "LAND-CO", CarrierRole::OriginLand, 2_000, 0),
            ];
            let packed = if i % 2 == 0 { PackedBy::Supplier } else { PackedBy::Ocm };
            for mut pa in compute_pas(&t.ci, &invoices, &ca, packed, &RouteToPacker, T0).map_err(|e| e.to_string())? {
                finalize_payment(&mut pa, None, Participant::new("ap", "SHIPPER"), &p, T0).map_err(|e| e.to_string())?;
                for raiser in &raisers {
                    let before = pa.clone();
                    let r = raise_dispute(TargetMut::Payment(&mut pa), None, raiser.clone(), &p, format!("D{i}"), "late".into(), None, T0);
                    ensure(matches!(r, Err(LifecycleError::Finalized(_))), || format!("dispute on finalized PA by {raiser:?}: {r:?}"))?;
                    ensure(pa == before, || "rejected dispute changed the PA".into())?;
                    rejected += 1;
                }
            }
        }

        // auto-approval boundary on the pure function
        let t = Tuple::new(100, 1000, 90, 1200, 85, 80);
        let period = Duration::from_secs(7 * 24 * 3600);
        let mut ca = compute_pass1(t.line(), &t.da, &t.ci, T0).map_err(|e| e.to_string())?;
        let early = lifecycle::auto_approve(&mut ca, T0.saturating_add(period).saturating_sub(Duration::from_millis(1)), period);
        ensure(early.is_empty(), || format!("auto-approved early: {early:?}"))?;
        let due = lifecycle::auto_approve(&mut ca, T0.saturating_add(period), period);
        ensure(due.len() == 3, || format!("auto-approved at the deadline: {due:?}"))?;
        let gateway = auto_approve_through_the_gateway()?;

        Ok(format!(
            "{triples} triples per machine give claim edges {seen_claim:?} and PA edges {seen_pa:?}; \
             {rejected} post-finalization disputes rejected; {gateway}"
        ))
    })();
    report("advice state machines", outcome);
}

fn put_po(i: usize) -> TxRequest {
    let po = PurchaseOrder {
        po_id: format!("PO{i:04}").as_str().into(),
        shipper_id: "SHIPPER".into(),
        line_items: vec![LineItem {
            line_item_id: "L1".into(),
            sku: "SKU-1".into(),
            quantity: Quantity(10),
            unit_price: usd(100),
            supplier_id: "SUP00".into(),
        }],
    };
    let doc: Value = serde_json::from_slice(&serialize_document(&EdiDocument::PurchaseOrder(po))).unwrap();
    TxRequest::new(chaincode::PUT_DOCUMENT, json!({ "document": doc }), "SHIPPER".into())
}

fn block_sizes(records: &[BlockRecord]) -> Vec<usize> {
    records.iter().map(|r| r.block.transactions.len()).collect()
}

fn small_corpus(num_pos: usize) -> Corpus {
    generate_corpus(&CorpusSpec {
        num_pos,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn plain_ledger(config: LedgerConfig, orgs: &[OrgId]) -> (Ledger, ManualClock) {
    let clock = ManualClock::new(T0);
    let ledger = Ledger::new(
        config,
        NetworkTopology::single_dc(orgs, 2),
        chaincode::registry(&ChaincodeConfig::default()),
        TimeMode::Virtual(clock.clone()),
    )
    .unwrap();
    (ledger, clock)
}

#[test]
fn ledger_replays_cuts_blocks_and_detects_conflicts() {
    let outcome = (|| {
        // replay
        let corpus = small_corpus(20);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let log = dir.path().join("blocks.jsonl");
        let config = LedgerConfig {
            block_log: Some(log.clone()),
            ..LedgerConfig::default()
        };
        let (ledger, _) = plain_ledger(config, &corpus.orgs());
        populate(&ledger, &corpus).map_err(|e| e.to_string())?;
        let live = ledger.state_digest();
        ensure(ledger.peer_digests().values().all(|d| *d == live), || "peers disagree".into())?;
        let from_file = verify_log(&log, EndorsementPolicy::Majority).map_err(|e| e.to_string())?;
        let (peer, from_memory) = verify_records(&ledger.records(), EndorsementPolicy::Majority).map_err(|e| e.to_string())?;
        ensure(from_file.state_digest == live && from_memory.state_digest == live && peer.state_digest() == live, || {
            format!("replayed {} / {} vs live {live}", from_file.state_digest, from_memory.state_digest)
        })?;
        let (again, _) = plain_ledger(LedgerConfig::default(), &corpus.orgs());
        populate(&again, &corpus).map_err(|e| e.to_string())?;
        ensure(again.state_digest() == live, || "a second identical run diverged".into())?;

        // cutting with the defaults
        let defaults = LedgerConfig::default().cutter;
        ensure(defaults.block_size == 100 && defaults.block_timeout == Duration::from_millis(500), || format!("defaults {defaults:?}"))?;
        let (l, clock) = plain_ledger(LedgerConfig::default(), &["SHIPPER".into(), "SUP00".into()]);
        for i in 0..250 {
            l.submit(put_po(i)).map_err(|e| e.to_string())?;
        }
        l.tick().map_err(|e| e.to_string())?;
        let burst = block_sizes(&l.records());
        clock.advance(Duration::from_millis(499));
        l.tick().map_err(|e| e.to_string())?;
        let before_timeout = block_sizes(&l.records());
        clock.advance(Duration::from_millis(1));
        l.tick().map_err(|e| e.to_string())?;
        let after_timeout = block_sizes(&l.records());
        ensure(burst == [100, 100] && before_timeout == [100, 100] && after_timeout == [100, 100, 50], || {
            format!("blocks {burst:?} → {before_timeout:?} → {after_timeout:?}")
        })?;

        // configured cutter
        let cfg = LedgerConfig {
            cutter: CutterConfig {
                block_size: 7,
                block_timeout: Duration::from_millis(40),
            },
            ..LedgerConfig::default()
        };
        let (l, _) = plain_ledger(cfg, &["SHIPPER".into(), "SUP00".into()]);
        for i in 0..30 {
            l.submit(put_po(i)).map_err(|e| e.to_string())?;
        }
        l.settle().map_err(|e| e.to_string())?;
        let configured = block_sizes(&l.records());
        ensure(configured == [7, 7, 7, 7, 2], || format!("size 7 cutter gave {configured:?}"))?;

        // two concurrent recomputations of the same claim advice
        let line = corpus.tuples()[0].clone();
        let op = ledger.operator();
        let a = ledger.submit(goods_ap::bench::setup::compute_ca_request(&line, &op, true)).map_err(|e| e.to_string())?;
        let b = ledger.submit(goods_ap::bench::setup::compute_ca_request(&line, &op, true)).map_err(|e| e.to_string())?;
        ledger.settle().map_err(|e| e.to_string())?;
        let va = ledger.status(&a).map_err(|e| e.to_string())?.validity;
        let vb = ledger.status(&b).map_err(|e| e.to_string())?.validity;
        let pair = (va, vb);
        let one_each = pair == (Some(TxValidity::Valid), Some(TxValidity::MvccConflict))
            || pair == (Some(TxValidity::MvccConflict), Some(TxValidity::Valid));
        ensure(one_each, || format!("same-key pair gave {va:?}, {vb:?}"))?;

        Ok(format!(
            "{} blocks replayed to {}…; default cut {after_timeout:?}; size-7 cut {configured:?}; same key: one VALID, one MVCC_CONFLICT",
            from_file.blocks,
            &live[..12]
        ))
    })();
    report("ledger determinism", outcome);
}

/// Reassigns line suppliers so that one PO has lines from several suppliers.
fn with_suppliers(mut corpus: Corpus, assignment: &[usize], suppliers: &[&str]) -> Corpus {
    let mut k = 0;
    let mut by_line = BTreeMap::new();
    for po in &mut corpus.purchase_orders {
        for item in &mut po.line_items {
            item.supplier_id = suppliers[assignment[k % assignment.len()]].into();
            by_line.insert(LineRef::new(po.po_id.as_str(), item.line_item_id.as_str()), item.supplier_id.clone());
            k += 1;
        }
    }
    for ci in &mut corpus.commercial_invoices {
        ci.supplier_id = by_line[&LineRef::new(ci.po_id.as_str(), ci.line_item_id.as_str())].clone();
    }
    corpus
}

fn http_status(agent: &ureq::Agent, url: &str, key: &str) -> u16 {
    match agent.get(url).set(http::API_KEY_HEADER, key).call() {
        Ok(r) => r.status(),
        Err(ureq::Error::Status(code, _)) => code,
        Err(e) => panic!("{url}: {e}"),
    }
}

#[test]
fn suppliers_only_see_their_own_line_items() {
    let suppliers = ["SUPA", "SUPB", "SUPC"];
    let base = generate_corpus(&CorpusSpec {
        num_pos: 2,
        line_items_per_po: Range { min: 3, max: 3 },
        seed: 11,
        ..CorpusSpec::default()
    })
    .unwrap();
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 6,
        ..ProptestConfig::default()
    });
    let pairs = std::cell::Cell::new(0usize);
    let result = runner.run(&prop::collection::vec(0usize..3, 6), |assignment| {
        let corpus = with_suppliers(base.clone(), &assignment, &suppliers);
        let clock = ManualClock::new(T0);
        let ledger = Arc::new(
            Ledger::new(
                LedgerConfig::default(),
                NetworkTopology::single_dc(&corpus.orgs(), 1),
                chaincode::registry(&ChaincodeConfig::default()),
                TimeMode::Virtual(clock),
            )
            .unwrap(),
        );
        populate(&ledger, &corpus).unwrap();
        let gw = Arc::new(Gateway::new(ledger.clone(), GatewayConfig::default()));
        for s in suppliers {
            gw.add_user_unchecked(UserAccount {
                user_id: format!("ar-{s}"),
                org_id: s.into(),
                role: Role::SupplierAr,
                api_key: format!("key-{s}"),
            })
            .unwrap();
        }
        let server = http::spawn(gw.clone(), "127.0.0.1:0".parse().unwrap()).unwrap();
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
        let owner: BTreeMap<LineRef, OrgId> = corpus
            .purchase_orders
            .iter()
            .flat_map(|po| po.line_items.iter().map(|l| (LineRef::new(po.po_id.as_str(), l.line_item_id.as_str()), l.supplier_id.clone())))
            .collect();
        for (line, line_supplier) in &owner {
            for s in suppliers {
                let org = OrgId::from(s);
                let mine = &org == line_supplier;
                let user = gw.authenticate(Some(&format!("key-{s}"))).unwrap();
                // direct queries against the ledger
                let ca = ledger.query(&keys::ca(line), &org);
                let pa = ledger.query(&keys::pa(line, line_supplier), &org);
                if mine {
                    prop_assert!(matches!(ca, Ok(Some(_))), "{s} reading its own CA {line}: {ca:?}");
                    prop_assert!(matches!(pa, Ok(Some(_))), "{s} reading its own PA {line}: {pa:?}");
                } else {
                    prop_assert!(matches!(ca, Err(LedgerError::AccessDenied { .. })), "{s} reading CA {line}: {ca:?}");
                    prop_assert!(matches!(pa, Err(LedgerError::AccessDenied { .. })), "{s} reading PA {line}: {pa:?}");
                }
                // the gateway API, in process and over HTTP
                let view_ca = gw.claim_advice(&user, line.po_id.as_str(), line.line_item_id.as_str());
                let view_pa = gw.payment_advices(&user, line.po_id.as_str(), line.line_item_id.as_str());
                let base = format!("{}/pos/{}/line-items/{}", server.url(), line.po_id, line.line_item_id);
                let key = format!("key-{s}");
                let codes = (
                    http_status(&agent, &format!("{base}/claim-advice"), &key),
                    http_status(&agent, &format!("{base}/payment-advices"), &key),
                );
                if mine {
                    prop_assert!(view_ca.is_ok() && view_pa.is_ok(), "{s} denied its own line {line}");
                    prop_assert_eq!(codes, (200, 200));
                } else {
                    prop_assert!(matches!(view_ca, Err(GatewayError::Forbidden(_))), "{s} CA view of {line}: {view_ca:?}");
                    prop_assert!(matches!(view_pa, Err(GatewayError::Forbidden(_))), "{s} PA view of {line}: {view_pa:?}");
                    prop_assert_eq!(codes, (403, 403));
                }
                pairs.set(pairs.get() + 1);
            }
        }
        server.stop();
        Ok(())
    });
    report(
        "privacy",
        result
            .map(|_| format!("{} (line, supplier) pairs over 6 random supplier layouts agree on ledger, gateway and HTTP", pairs.get()))
            .map_err(|e| e.to_string()),
    );
}

fn bench_corpus() -> Corpus {
    generate_corpus(&CorpusSpec {
        num_pos: 1000,
        seed: 7,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn both() -> LoadConfig {
    LoadConfig {
        transaction_mix: TransactionMix {
            compute_ca: 1.0,
            compute_pas: 1.0,
        },
        ..LoadConfig::default()
    }
}

fn timed(f: impl FnOnce() -> Result<SweepResult, String>) -> Result<(SweepResult, Duration), String> {
    let t = Instant::now();
    let r = f()?;
    Ok((r, t.elapsed()))
}

fn fmt_series(rows: &[&SweepRow], f: fn(&SweepRow) -> f64) -> String {
    rows.iter().map(|r| format!("{}:{:.3}", r.x, f(r))).collect::<Vec<_>>().join(" ")
}

#[test]
fn benchmark_trends() {
    let outcome = (|| {
        let prepared = prepare(&bench_corpus()).map_err(|e| e.to_string())?;
        let limit = Duration::from_secs(600);
        let mut notes = Vec::new();

        let grid = [25.0, 50.0, 100.0, 150.0, 200.0, 300.0];
        let (rates, took) = timed(|| sweep(SweepKind::SendRate, &grid, &both(), &prepared).map_err(|e| e.to_string()))?;
        ensure(took < limit, || format!("send-rate sweep took {took:?}"))?;
        let mut peak = BTreeMap::new();
        for kind in TxKind::ALL {
            let rows = rates.series(kind);
            let tp: Vec<f64> = rows.iter().map(|r| r.throughput).collect();
            let lat: Vec<f64> = rows.iter().map(|r| r.latency_mean).collect();
            let max = tp.iter().cloned().fold(0.0, f64::max);
            let top = rows.last().ok_or("empty sweep")?;
            // (a) carried in full at low load, rising, then flat well below the offered rate
            ensure(tp[0] >= 0.9 * grid[0] && tp[1] > tp[0], || format!("{kind} does not rise: {tp:?}"))?;
            ensure(top.throughput < 0.7 * top.send_rate && top.throughput >= 0.8 * max, || {
                format!("{kind} does not saturate: {tp:?}")
            })?;
            // (b)
            ensure(lat.windows(2).all(|w| w[1] >= w[0]), || format!("{kind} latency not monotone: {lat:?}"))?;
            // (d)
            ensure(max >= 25.0, || format!("{kind} peak {max:.1} tx/s"))?;
            notes.push(format!(
                "{kind} throughput [{}] latency [{}]",
                fmt_series(&rows, |r| r.throughput),
                fmt_series(&rows, |r| r.latency_mean)
            ));
            peak.insert(kind, max);
        }
        ensure(peak[&TxKind::ComputePas] > peak[&TxKind::ComputeCa], || format!("saturation {peak:?}"))?;
        notes.push(format!("send-rate sweep {took:.1?}"));

        // above computeCA saturation
        let base = LoadConfig {
            transaction_mix: TransactionMix::only(TxKind::ComputeCa),
            send_rate: 120.0,
            ..LoadConfig::default()
        };
        let (peers, took) = timed(|| sweep(SweepKind::Peers, &[1.0, 2.0, 3.0, 4.0], &base, &prepared).map_err(|e| e.to_string()))?;
        ensure(took < limit, || format!("peer sweep took {took:?}"))?;
        let rows = peers.series(TxKind::ComputeCa);
        ensure(rows.windows(2).all(|w| w[1].latency_mean > w[0].latency_mean), || {
            format!("computeCA latency over peers {}", fmt_series(&rows, |r| r.latency_mean))
        })?;
        notes.push(format!("peers latency [{}] in {took:.1?}", fmt_series(&rows, |r| r.latency_mean)));

        // (c)
        let geo_base = LoadConfig {
            topology: TopologySpec::Generated {
                peers_per_org: 1,
                datacenters: 1,
                inter_dc_lo_ms: 50.0,
                inter_dc_hi_ms: 130.0,
            },
            ..both()
        };
        let (geo, took) = timed(|| sweep(SweepKind::Geo, &[1.0, 5.0], &geo_base, &prepared).map_err(|e| e.to_string()))?;
        ensure(took < limit, || format!("geo sweep took {took:?}"))?;
        for kind in TxKind::ALL {
            let rows = geo.series(kind);
            let (one, five) = (rows[0], rows[1]);
            ensure(five.throughput < one.throughput && five.latency_mean > one.latency_mean, || {
                format!(
                    "{kind} 1 DC {:.2} tx/s {:.3} s vs 5 DC {:.2} tx/s {:.3} s",
                    one.throughput, one.latency_mean, five.throughput, five.latency_mean
                )
            })?;
            notes.push(format!(
                "{kind} 1→5 DC {:.2}→{:.2} tx/s, {:.3}→{:.3} s",
                one.throughput, five.throughput, one.latency_mean, five.latency_mean
            ));
        }
        notes.push(format!("geo sweep {took:.1?}"));
        Ok(notes.join("; "))
    })();
    report("benchmark trends", outcome);
}

// -- end to end over HTTP ---------------------------------------------------

const SHIPPER_AP: &str = "ap";
const SHIPPER_RCV: &str = "rcv";
const ADMIN: &str = "admin";

struct Network {
    gw: Arc<Gateway>,
    clock: ManualClock,
    /// user id → api key, one user per org and role
    users: BTreeMap<String, UserAccount>,
    supplier_user: BTreeMap<OrgId, String>,
    carrier_user: BTreeMap<OrgId, String>,
}

impl Network {
    fn new(corpus: &Corpus, period: Duration, block_log: Option<&Path>) -> Result<Self, String> {
        let clock = ManualClock::new(T0);
        let config = LedgerConfig {
            block_log: block_log.map(Path::to_path_buf),
            ..LedgerConfig::default()
        };
        let ledger = Ledger::new(
            config,
            NetworkTopology::single_dc(&corpus.orgs(), 1),
            chaincode::registry(&ChaincodeConfig::default()),
            TimeMode::Virtual(clock.clone()),
        )
        .map_err(|e| e.to_string())?;
        let gw = Gateway::new(
            Arc::new(ledger),
            GatewayConfig {
                waiting_period_ms: period.as_millis() as u64,
                ..GatewayConfig::default()
            },
        );
        let shipper = corpus.purchase_orders[0].shipper_id.clone();
        let mut accounts = vec![
            (SHIPPER_AP.to_string(), shipper.clone(), Role::ShipperAp),
            (SHIPPER_RCV.to_string(), shipper, Role::ShipperReceiving),
            (ADMIN.to_string(), gw.operator().clone(), Role::Admin),
        ];
        let mut supplier_user = BTreeMap::new();
        let mut carrier_user = BTreeMap::new();
        for s in corpus.purchase_orders.iter().flat_map(|p| p.line_items.iter().map(|l| l.supplier_id.clone())) {
            let id = format!("ar-{s}");
            if supplier_user.insert(s.clone(), id.clone()).is_none() {
                accounts.push((id, s, Role::SupplierAr));
            }
        }
        for c in corpus.carrier_invoices.iter().map(|i| i.carrier_id.clone()) {
            let id = format!("ar-{c}");
            if carrier_user.insert(c.clone(), id.clone()).is_none() {
                accounts.push((id, c, Role::CarrierAr));
            }
        }
        let mut users = BTreeMap::new();
        for (id, org, role) in accounts {
            let account = UserAccount {
                user_id: id.clone(),
                org_id: org,
                role,
                api_key: format!("key-{id}"),
            };
            gw.add_user_unchecked(account.clone()).map_err(|e| e.to_string())?;
            users.insert(id, account);
        }
        Ok(Network {
            gw: Arc::new(gw),
            clock,
            users,
            supplier_user,
            carrier_user,
        })
    }

    fn user(&self, id: &str) -> UserAccount {
        self.users[id].clone()
    }

    fn poster(&self, doc: &EdiDocument, corpus: &Corpus) -> String {
        match doc {
            EdiDocument::PurchaseOrder(_) => SHIPPER_AP.into(),
            EdiDocument::ReceivingAdvice(_) => SHIPPER_RCV.into(),
            EdiDocument::CommercialInvoice(ci) => self.supplier_user[&ci.supplier_id].clone(),
            EdiDocument::DespatchAdvice(da) => {
                let po = corpus.purchase_orders.iter().find(|p| p.po_id == da.po_id).unwrap();
                self.supplier_user[&po.line(&da.line_item_id).unwrap().supplier_id].clone()
            }
            EdiDocument::CarrierInvoice(inv) => self.carrier_user[&inv.carrier_id].clone(),
        }
    }

    /// Documents except RAs, shipment registrations, and packing and loading
    /// events; then the claim job until it runs dry.
    fn load_to_pass1(&self, corpus: &Corpus) -> Result<(), String> {
        let gw = &self.gw;
        let docs: Vec<EdiDocument> = corpus
            .purchase_orders
            .iter()
            .cloned()
            .map(EdiDocument::PurchaseOrder)
            .chain(corpus.despatch_advices.iter().cloned().map(EdiDocument::DespatchAdvice))
            .chain(corpus.commercial_invoices.iter().cloned().map(EdiDocument::CommercialInvoice))
            .chain(corpus.carrier_invoices.iter().cloned().map(EdiDocument::CarrierInvoice))
            .collect();
        for doc in &docs {
            let user = self.user(&self.poster(doc, corpus));
            gw.ingest_document(&user, doc.kind().as_str(), &serialize_document(doc))
                .map_err(|e| format!("{} {}: {e}", doc.kind(), doc.id()))?;
        }
        for s in &corpus.shipments {
            let req = goods_ap::gateway::ShipmentRequest {
                bol: s.bol.clone(),
                container_no: s.container_no.clone(),
                lines: s.lines.clone(),
            };
            gw.register_shipment(&self.user(SHIPPER_AP), req).map_err(|e| e.to_string())?;
        }
        let early: Vec<_> = corpus
            .events
            .iter()
            .filter(|e| e.event_type != goods_ap::events::DISPATCHED_FROM_TRUCK)
            .cloned()
            .collect();
        self.track(early)?;
        self.drain_claims()
    }

    fn track(&self, events: Vec<goods_ap::events::TrackingEvent>) -> Result<(), String> {
        if let Some(last) = events.iter().map(|e| e.occurred_at).max() {
            if last > self.clock.now() {
                self.clock.set(last);
            }
        }
        let results = self.gw.ingest_events(&self.user(ADMIN), events).map_err(|e| e.to_string())?;
        let failed: Vec<_> = results.iter().filter(|r| r.status != "RECORDED").collect();
        ensure(failed.is_empty(), || format!("events not recorded: {failed:?}"))
    }

    fn drain_claims(&self) -> Result<(), String> {
        for _ in 0..10 {
            let r = self.gw.run_generate_claim_advices();
            ensure(r.failed == 0 && r.unavailable == 0, || format!("claim job: {r:?}"))?;
            if r.submitted == 0 {
                return Ok(());
            }
        }
        Err("claim job never ran dry".into())
    }
}

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn call(&self, method: &str, path: &str, key: &str, body: Option<&Value>) -> Result<(u16, Value), String> {
        let req = self
            .agent
            .request(method, &format!("{}{path}", self.base))
            .set(http::API_KEY_HEADER, key);
        let resp = match body {
            Some(b) => req.set("content-type", "application/json").send_string(&b.to_string()),
            None => req.call(),
        };
        let (code, text) = match resp {
            Ok(r) => (r.status(), r.into_string().map_err(|e| e.to_string())?),
            Err(ureq::Error::Status(code, r)) => (code, r.into_string().map_err(|e| e.to_string())?),
            Err(e) => return Err(format!("{method} {path}: {e}")),
        };
        let value = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).map_err(|e| format!("{method} {path}: {e}: {text}"))?
        };
        Ok((code, value))
    }

    fn ok(&self, method: &str, path: &str, key: &str, body: Option<&Value>) -> Result<Value, String> {
        let (code, v) = self.call(method, path, key, body)?;
        ensure((200..300).contains(&code), || format!("{method} {path} → {code} {v}"))?;
        Ok(v)
    }
}

/// Expected net per payee role for one line, computed from the corpus
/// documents alone.
fn expected_nets(corpus: &Corpus, line: &LineRef) -> BTreeMap<String, (OrgId, i64, i64)> {
    let po = corpus.purchase_orders.iter().find(|p| p.po_id == line.po_id).unwrap();
    let item = po.line(&line.line_item_id).unwrap();
    let find = |id: &LineRef| id.po_id == line.po_id && id.line_item_id == line.line_item_id;
    let da = corpus.despatch_advices.iter().find(|d| find(&LineRef::new(d.po_id.as_str(), d.line_item_id.as_str()))).unwrap();
    let ci = corpus.commercial_invoices.iter().find(|d| find(&LineRef::new(d.po_id.as_str(), d.line_item_id.as_str()))).unwrap();
    let ra = corpus.receiving_advices.iter().find(|d| find(&LineRef::new(d.po_id.as_str(), d.line_item_id.as_str()))).unwrap();
    let po_p = item.unit_price.amount;
    let ci_gross = ci.quantity.0 as i64 * ci.unit_price.amount;
    let total = ci_gross - ra.accepted_quantity.0 as i64 * po_p;
    let damage = (da.quantity.0.min(item.quantity.0) - ra.accepted_quantity.0) as i64 * po_p;
    let packed = corpus.shipments.iter().find(|s| s.lines.contains(line)).unwrap().packed_by;
    let mut out = BTreeMap::new();
    let supplier_damage = if packed == PackedBy::Supplier { damage } else { 0 };
    out.insert("SUPPLIER".to_string(), (ci.supplier_id.clone(), ci_gross, ci_gross - (total - damage) - supplier_damage));
    for inv in &corpus.carrier_invoices {
        let share: i64 = inv.share_for(line).map(|a| a.amount.amount).sum();
        if share == 0 && inv.share_for(line).next().is_none() {
            continue;
        }
        let role = serde_json::to_value(PayeeRole::from(inv.carrier_role)).unwrap().as_str().unwrap().to_string();
        let entry = out.entry(role).or_insert((inv.carrier_id.clone(), 0, 0));
        entry.1 += share;
        entry.2 += share;
    }
    if packed == PackedBy::Ocm {
        out.get_mut("OCM").unwrap().2 -= damage;
    }
    out
}

#[test]
fn fifty_purchase_orders_end_to_end_over_http() {
    let outcome = (|| {
        let corpus = small_corpus(50);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let log = dir.path().join("blocks.jsonl");
        let net = Network::new(&corpus, Duration::from_secs(7 * 24 * 3600), Some(&log))?;
        let server = http::spawn(net.gw.clone(), "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
        let c = Client {
            base: server.url(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
        };
        let key = |id: &str| net.users[id].api_key.clone();
        let admin = key(ADMIN);

        // documents before delivery
        for doc in corpus
            .purchase_orders
            .iter()
            .cloned()
            .map(EdiDocument::PurchaseOrder)
            .chain(corpus.despatch_advices.iter().cloned().map(EdiDocument::DespatchAdvice))
            .chain(corpus.commercial_invoices.iter().cloned().map(EdiDocument::CommercialInvoice))
            .chain(corpus.carrier_invoices.iter().cloned().map(EdiDocument::CarrierInvoice))
        {
            let body: Value = serde_json::from_slice(&serialize_document(&doc)).unwrap();
            c.ok("POST", &format!("/edi/{}", doc.kind()), &key(&net.poster(&doc, &corpus)), Some(&body))?;
        }
        for s in &corpus.shipments {
            let body = json!({ "bol": s.bol, "containerNo": s.container_no, "lines": s.lines });
            c.ok("POST", "/shipments", &key(SHIPPER_AP), Some(&body))?;
        }
        let (early, late): (Vec<_>, Vec<_>) = corpus
            .events
            .iter()
            .cloned()
            .partition(|e| e.event_type != goods_ap::events::DISPATCHED_FROM_TRUCK);
        let post_events = |events: Vec<goods_ap::events::TrackingEvent>| -> Result<(), String> {
            if let Some(last) = events.iter().map(|e| e.occurred_at).max() {
                net.clock.set(last.max(net.clock.now()));
            }
            let r = c.ok("POST", "/events", &admin, Some(&serde_json::to_value(&events).unwrap()))?;
            let bad: Vec<_> = r.as_array().unwrap().iter().filter(|e| e["status"] != "RECORDED").collect();
            ensure(bad.is_empty(), || format!("events {bad:?}"))
        };
        let cron = |job: &str| -> Result<(), String> {
            for _ in 0..10 {
                let r = c.ok("POST", &format!("/cron/{job}"), &admin, None)?;
                ensure(r["failed"] == 0 && r["unavailable"] == 0, || format!("{job}: {r}"))?;
                if r["submitted"] == 0 {
                    return Ok(());
                }
            }
            Err(format!("{job} never ran dry"))
        };
        post_events(early)?;
        cron("generate-claim-advices")?;

        // pass 1 is visible to the supplier before delivery
        let tuples = corpus.tuples();
        let first = &tuples[0];
        let supplier_of = |line: &LineRef| {
            let po = corpus.purchase_orders.iter().find(|p| p.po_id == line.po_id).unwrap();
            po.line(&line.line_item_id).unwrap().supplier_id.clone()
        };
        let su_key = key(&net.supplier_user[&supplier_of(first)]);
        let ca_path = |l: &LineRef| format!("/pos/{}/line-items/{}/claim-advice", l.po_id, l.line_item_id);
        let v = c.ok("GET", &ca_path(first), &su_key, None)?;
        ensure(v["status"] == "PASS1_DONE", || format!("before delivery {}: {}", first, v["status"]))?;

        // receiving and delivery
        for ra in &corpus.receiving_advices {
            let doc = EdiDocument::ReceivingAdvice(ra.clone());
            let body: Value = serde_json::from_slice(&serialize_document(&doc)).unwrap();
            c.ok("POST", "/edi/RA", &key(SHIPPER_RCV), Some(&body))?;
        }
        post_events(late)?;
        cron("generate-claim-advices")?;
        cron("generate-payment-advices")?;

        let ap = key(SHIPPER_AP);
        let four: BTreeSet<&str> = ["SUPPLIER", "OCM", "ORIGIN_LAND", "OCEAN"].into();
        for line in &tuples {
            let v = c.ok("GET", &ca_path(line), &ap, None)?;
            ensure(v["status"] == "COMPLETE", || format!("{line}: {}", v["status"]))?;
            let want = expected_nets(&corpus, line);
            ensure(want.keys().map(String::as_str).collect::<BTreeSet<_>>() == four, || format!("{line}: corpus roles {:?}", want.keys()))?;
            let pas = c.ok("GET", &format!("/pos/{}/line-items/{}/payment-advices", line.po_id, line.line_item_id), &ap, None)?;
            let mut got = BTreeMap::new();
            for pa in pas["advices"].as_array().ok_or("no advices")? {
                got.insert(
                    pa["payeeRole"].as_str().unwrap_or("?").to_string(),
                    (
                        OrgId::from(pa["payeeId"].as_str().unwrap_or("?")),
                        pa["grossAmount"]["amount"].as_i64().unwrap_or(i64::MIN),
                        pa["netAmount"]["amount"].as_i64().unwrap_or(i64::MIN),
                    ),
                );
            }
            ensure(got == want, || format!("{line}: PAs {got:?}, expected {want:?}"))?;
        }

        // one scripted dispute, raised by the supplier and accepted by the shipper
        let body = json!({ "poId": first.po_id, "lineItemId": first.line_item_id,
                           "target": { "type": "CLAIM", "category": "PRICE_DISCREPANCY" },
                           "text": "unit price agreed in the contract addendum" });
        let raised = c.ok("POST", "/disputes", &su_key, Some(&body))?;
        let id = raised["response"]["disputeId"].as_str().ok_or("no dispute id")?.to_string();
        c.ok("POST", &format!("/disputes/{id}/comments"), &ap, Some(&json!({ "text": "addendum received" })))?;
        c.ok("POST", &format!("/disputes/{id}/resolve"), &ap, Some(&json!({ "verdict": "ACCEPT" })))?;
        let v = c.ok("GET", &ca_path(first), &su_key, None)?;
        let pd = v["categories"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["category"] == "PRICE_DISCREPANCY")
            .cloned()
            .ok_or("no PRICE_DISCREPANCY")?;
        ensure(pd["state"] == "MA", || format!("disputed claim is {}", pd["state"]))?;

        // a finalized PA refuses further disputes
        let supplier_pa = goods_ap::payments::pa_id(first, &supplier_of(first));
        c.ok("POST", &format!("/payment-advices/{supplier_pa}/finalize"), &ap, None)?;
        let late_dispute = json!({ "poId": first.po_id, "lineItemId": first.line_item_id,
                                   "target": { "type": "PAYMENT", "payeeId": supplier_of(first) }, "text": "short paid" });
        let (code, _) = c.call("POST", "/disputes", &su_key, Some(&late_dispute))?;
        ensure(code == 422, || format!("dispute on a finalized PA answered {code}"))?;
        server.stop();

        // replay the block log on a fresh peer and read the trail back
        let records = BlockLog::read_all(&log).map_err(|e| e.to_string())?;
        let (peer, replay) = verify_records(&records, EndorsementPolicy::Majority).map_err(|e| e.to_string())?;
        ensure(replay.state_digest == net.gw.ledger().state_digest(), || "replayed digest differs".into())?;
        let get = |k: &str| peer.state().get(k).map(|v| v.value.clone()).ok_or(format!("{k} missing after replay"));
        let ca: ClaimAdvice = serde_json::from_str(&get(&keys::ca(first))?).map_err(|e| e.to_string())?;
        let claim = &ca.claims[&ClaimCategory::PriceDiscrepancy];
        let steps: Vec<(AdviceState, Action, String)> = claim.history.iter().map(|s| (s.to, s.action, s.by.clone())).collect();
        let su_user = &net.supplier_user[&supplier_of(first)];
        let want_steps = vec![
            (AdviceState::Open, Action::Issue, "system".to_string()),
            (AdviceState::Ar, Action::RaiseDispute, format!("{su_user}@{}", supplier_of(first))),
            (AdviceState::Ma, Action::ResolveDispute, format!("{SHIPPER_AP}@{}", corpus.purchase_orders[0].shipper_id)),
        ];
        ensure(steps == want_steps, || format!("replayed claim history {steps:?}"))?;
        let dispute: Dispute = serde_json::from_str(&get(&keys::dispute(first, &id))?).map_err(|e| e.to_string())?;
        ensure(
            dispute.status == DisputeStatus::Accepted
                && dispute.comments.len() == 2
                && dispute.resolved_by.as_ref().map(|p| p.user_id.as_str()) == Some(SHIPPER_AP),
            || format!("replayed dispute {dispute:?}"),
        )?;
        // every audited dispute call is a valid transaction of the replayed chain
        let valid: BTreeSet<String> = records
            .iter()
            .flat_map(|r| r.block.transactions.iter().zip(&r.validity))
            .filter(|(_, v)| **v == TxValidity::Valid)
            .map(|(t, _)| t.tx_id.to_string())
            .collect();
        let audited: Vec<_> = net
            .gw
            .audit_log()
            .into_iter()
            .filter(|a| a.action.contains("dispute") && a.status < 300)
            .collect();
        ensure(audited.len() == 3, || format!("audit entries {audited:?}"))?;
        for a in &audited {
            let tx = a.tx_id.as_ref().ok_or("audited call without a transaction")?;
            ensure(valid.contains(&tx.to_string()), || format!("{tx} is not a valid replayed transaction"))?;
        }

        Ok(format!(
            "{} lines COMPLETE with exact PAs for {four:?}; dispute {id} OPEN→AR→MA; {} blocks replayed to the live digest",
            tuples.len(),
            replay.blocks
        ))
    })();
    report("end-to-end pipeline", outcome);
}
