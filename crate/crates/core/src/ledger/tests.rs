use super::*;
use crate::time::ManualClock;

/// `{"key", "value"}` → writes the value; `{"scope", "orgs"}` → writes a
/// scope record.
struct Kv;

impl Contract for Kv {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        if let Some(prefix) = args.get("scope").and_then(Value::as_str) {
            ctx.put(&scope::scope_key(prefix), args["orgs"].to_string());
            return Ok(Value::Null);
        }
        let key = args["key"].as_str().ok_or_else(|| ContractError::bad("key"))?;
        if key.is_empty() {
            return Err(ContractError::bad("empty key"));
        }
        let prev = ctx.get(key);
        ctx.put(key, args["value"].to_string());
        ctx.emit("written", json!({ "key": key }));
        Ok(json!({ "previous": prev }))
    }
}

fn orgs() -> Vec<OrgId> {
    vec!["A".into(), "B".into(), "C".into(), "D".into()]
}

fn ledger_with(config: LedgerConfig, topology: NetworkTopology) -> (Ledger, ManualClock) {
    let clock = ManualClock::new(Timestamp(1_000));
    let mut reg = ContractRegistry::new();
    reg.register("kv", Arc::new(Kv));
    let l = Ledger::new(config, topology, reg, TimeMode::Virtual(clock.clone())).unwrap();
    (l, clock)
}

fn ledger() -> (Ledger, ManualClock) {
    ledger_with(LedgerConfig::default(), NetworkTopology::single_dc(&orgs(), 1))
}

fn put(key: &str, value: i64) -> TxRequest {
    TxRequest::new("kv", json!({ "key": key, "value": value }), "A".into())
}

const WAIT: Duration = Duration::from_secs(60);

#[test]
fn unknown_function_fails_at_submit() {
    let (l, _) = ledger();
    let err = l.submit(TxRequest::new("nope", json!({}), "A".into())).unwrap_err();
    assert_eq!(err, LedgerError::UnknownFunction("nope".into()));
}

#[test]
fn phases_advance_to_committed() {
    let (l, clock) = ledger();
    let id = l.submit(put("k", 1)).unwrap();
    assert_eq!(l.status(&id).unwrap().phase, TxPhase::Submitted);
    l.tick().unwrap();
    assert_eq!(l.status(&id).unwrap().phase, TxPhase::Endorsed);
    clock.advance(Duration::from_millis(500));
    l.tick().unwrap();
    let st = l.status(&id).unwrap();
    assert_eq!(st.phase, TxPhase::Committed);
    assert_eq!(st.validity, Some(TxValidity::Valid));
    assert!(st.committed_at.unwrap() >= st.submitted_at);
    assert!(matches!(l.status(&"zzz".into()), Err(LedgerError::UnknownTx(_))));
}

#[test]
fn contract_refusal_is_a_failed_tx() {
    let (l, _) = ledger();
    let st = l.submit_and_wait(put("", 1), WAIT).unwrap();
    assert_eq!(st.phase, TxPhase::Failed);
    assert!(matches!(st.error, Some(ContractError::BadRequest(_))));
    assert_eq!(l.height(), 0);
}

#[test]
fn same_key_in_one_block_conflicts() {
    let (l, _) = ledger();
    let a = l.submit(put("ca", 1)).unwrap();
    let b = l.submit(put("ca", 2)).unwrap();
    l.settle().unwrap();
    let va = l.status(&a).unwrap().validity.unwrap();
    let vb = l.status(&b).unwrap().validity.unwrap();
    assert_eq!((va, vb), (TxValidity::Valid, TxValidity::MvccConflict));
    assert_eq!(l.query("ca", &"PLATFORM".into()).unwrap().as_deref(), Some("1"));
}

#[test]
fn disjoint_keys_both_commit() {
    let (l, _) = ledger();
    let a = l.submit(put("x", 1)).unwrap();
    let b = l.submit(put("y", 2)).unwrap();
    l.settle().unwrap();
    assert!(l.status(&a).unwrap().is_valid());
    assert!(l.status(&b).unwrap().is_valid());
}

#[test]
fn burst_of_150_cuts_100_then_50_after_timeout() {
    let (l, clock) = ledger();
    let t0 = clock.now();
    for i in 0..150 {
        l.submit(put(&format!("k{i}"), i)).unwrap();
    }
    l.tick().unwrap();
    let recs = l.records();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].block.transactions.len(), 100);
    assert_eq!(recs[0].block.timestamp, t0);
    assert_eq!(l.next_deadline(), Some(t0.saturating_add(Duration::from_millis(500))));
    clock.advance(Duration::from_millis(499));
    l.tick().unwrap();
    assert_eq!(l.records().len(), 1);
    clock.advance(Duration::from_millis(1));
    l.tick().unwrap();
    let recs = l.records();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1].block.transactions.len(), 50);
    assert_eq!(recs[1].block.timestamp, t0.saturating_add(Duration::from_millis(500)));
}

#[test]
fn configurable_cutter() {
    let config = LedgerConfig {
        cutter: CutterConfig {
            block_size: 3,
            block_timeout: Duration::from_millis(50),
        },
        ..LedgerConfig::default()
    };
    let (l, _) = ledger_with(config, NetworkTopology::single_dc(&orgs(), 1));
    for i in 0..7 {
        l.submit(put(&format!("k{i}"), i)).unwrap();
    }
    l.settle().unwrap();
    let sizes: Vec<_> = l.records().iter().map(|r| r.block.transactions.len()).collect();
    assert_eq!(sizes, [3, 3, 1]);
}

#[test]
fn quiet_network_emits_no_blocks() {
    let (l, clock) = ledger();
    clock.advance(Duration::from_secs(10));
    assert_eq!(l.tick().unwrap(), 0);
    assert_eq!(l.height(), 0);
}

#[test]
fn peers_converge_and_log_replays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blocks.jsonl");
    let config = LedgerConfig {
        block_log: Some(path.clone()),
        ..LedgerConfig::default()
    };
    let (l, _) = ledger_with(config, NetworkTopology::single_dc(&orgs(), 2));
    for round in 0..3 {
        for i in 0..40 {
            l.submit(put(&format!("k{}", i % 25), round * 100 + i)).unwrap();
        }
        l.settle().unwrap();
    }
    let digests = l.peer_digests();
    assert_eq!(digests.len(), 8);
    assert!(digests.values().all(|d| *d == l.state_digest()));

    let report = verify_log(&path, EndorsementPolicy::Majority).unwrap();
    assert_eq!(report.state_digest, l.state_digest());
    assert_eq!(report.blocks, l.height());
    assert_eq!(report.transactions, 120);
    assert!(report.valid < 120, "same-key writes in a block must conflict");
}

#[test]
fn tampered_log_is_detected() {
    let (l, _) = ledger();
    for i in 0..5 {
        l.submit(put(&format!("k{i}"), i)).unwrap();
        l.settle().unwrap();
    }
    let records = l.records();
    let mut bad = records.clone();
    bad[2].block.transactions[0].execution.rwset.writes.insert("k2".into(), Some("999".into()));
    assert_eq!(
        verify_records(&bad, EndorsementPolicy::Majority).unwrap_err(),
        IntegrityError::BadHash(2)
    );
    let mut relinked = records.clone();
    relinked.remove(1);
    assert!(verify_records(&relinked, EndorsementPolicy::Majority).is_err());
    let mut digest = records;
    digest[3].state_digest = "00".into();
    assert!(matches!(
        verify_records(&digest, EndorsementPolicy::Majority),
        Err(IntegrityError::DigestMismatch { number: 3, .. })
    ));
}

#[test]
fn divergent_endorsers() {
    let (l, _) = ledger();
    l.set_fault("A-peer0", Some(Fault::Divergent));
    let st = l.submit_and_wait(put("x", 1), WAIT).unwrap();
    assert_eq!(st.validity, Some(TxValidity::Valid));

    l.set_fault("B-peer0", Some(Fault::Divergent));
    let st = l.submit_and_wait(put("y", 1), WAIT).unwrap();
    assert_eq!(st.validity, Some(TxValidity::EndorsementFailure));
    assert_eq!(l.query("y", &"PLATFORM".into()).unwrap(), None);
}

#[test]
fn scoped_queries_distinguish_denied_from_absent() {
    let (l, _) = ledger();
    let scope = |prefix: &str, orgs: &[&str]| {
        TxRequest::new("kv", json!({ "scope": prefix, "orgs": orgs }), "PLATFORM".into())
    };
    l.submit(scope("li/PO1/L1/", &["A", "B"])).unwrap();
    l.submit(scope("li/PO1/L2/", &["A", "C"])).unwrap();
    l.submit(put("li/PO1/L1/ca", 1)).unwrap();
    l.submit(put("li/PO1/L2/ca", 2)).unwrap();
    l.settle().unwrap();
    let b = OrgId::from("B");
    assert_eq!(l.query("li/PO1/L1/ca", &b).unwrap().as_deref(), Some("1"));
    assert!(matches!(l.query("li/PO1/L2/ca", &b), Err(LedgerError::AccessDenied { .. })));
    assert_eq!(l.query("li/PO1/L1/missing", &b).unwrap(), None);
    let visible: Vec<_> = l.scan("li/PO1/", &b).into_iter().map(|(k, _)| k).collect();
    assert_eq!(visible, ["li/PO1/L1/ca"]);

    // submissions into a scope the creator is not part of are refused
    let req = TxRequest::new("kv", json!({"key": "li/PO1/L2/x", "value": 0}), b.clone())
        .with_scope("li/PO1/L2/");
    assert!(matches!(l.submit(req), Err(LedgerError::AccessDenied { .. })));
}

#[test]
fn scoped_endorsement_uses_scope_orgs() {
    let (l, _) = ledger();
    l.submit(TxRequest::new("kv", json!({"scope": "s/", "orgs": ["A", "B", "C"]}), "PLATFORM".into()))
        .unwrap();
    l.settle().unwrap();
    let st = l
        .submit_and_wait(put("s/k", 1).with_scope("s/"), WAIT)
        .unwrap();
    assert!(st.is_valid());
    let rec = l.records().pop().unwrap();
    let tx = &rec.block.transactions[0];
    assert_eq!(tx.endorsers_total, 3);
}

#[test]
fn events_only_from_valid_txs() {
    let (l, _) = ledger();
    l.submit(put("k", 1)).unwrap();
    l.submit(put("k", 2)).unwrap();
    l.settle().unwrap();
    let events = l.take_events();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].event.name, "written");
    assert!(l.take_events().is_empty());
}

#[test]
fn outage_rejects_submissions() {
    let (l, _) = ledger();
    l.set_available(false);
    assert_eq!(l.submit(put("k", 1)).unwrap_err(), LedgerError::Unavailable);
    l.set_available(true);
    assert!(l.submit(put("k", 1)).is_ok());
}

#[test]
fn upgrades_need_every_org_and_are_recorded() {
    let (l, _) = ledger();
    let some: BTreeSet<OrgId> = ["A".into(), "B".into()].into();
    assert!(matches!(
        l.upgrade_contract("kv", Arc::new(Kv), Timestamp(0), &some),
        Err(LedgerError::Registry(RegistryError::MissingApprovals { .. }))
    ));
    let all: BTreeSet<OrgId> = orgs().into_iter().collect();
    let (info, tx) = l.upgrade_contract("kv", Arc::new(Kv), Timestamp(5), &all).unwrap();
    assert_eq!(info.version, 2);
    let st = l.wait(&tx, WAIT).unwrap();
    assert!(st.is_valid());
    assert!(l.query("_contracts/kv/v2", &"PLATFORM".into()).unwrap().is_some());
    assert_eq!(l.contract_versions("kv").len(), 2);
}

#[test]
fn identical_runs_are_bit_reproducible() {
    let run = || {
        let (l, _) = ledger();
        for i in 0..230 {
            l.submit(put(&format!("k{}", i % 17), i)).unwrap();
            if i % 50 == 0 {
                l.settle().unwrap();
            }
        }
        l.settle().unwrap();
        (l.state_digest(), l.records())
    };
    assert_eq!(run(), run());
}

#[test]
fn harness_stages_endorse_then_commit_caller_batches() {
    let (l, _) = ledger();
    let (a, oa) = l.endorse_now(put("k", 1)).unwrap();
    let (b, ob) = l.endorse_now(put("k", 2)).unwrap();
    assert_eq!(l.status(&a).unwrap().phase, TxPhase::Endorsed);
    let txs: Vec<Transaction> = [oa, ob]
        .into_iter()
        .map(|o| match o {
            EndorseOutcome::Endorsed { tx, .. } => tx,
            EndorseOutcome::Rejected(e) => panic!("{e}"),
        })
        .collect();
    assert_eq!(txs[0].execution.rwset.reads.len(), 1);
    let v = l.commit_batch(txs).unwrap();
    assert_eq!(v, vec![TxValidity::Valid, TxValidity::MvccConflict]);
    assert_eq!(l.status(&b).unwrap().validity, Some(TxValidity::MvccConflict));
    assert_eq!(l.height(), 1);
    let (_, o) = l.endorse_now(put("", 1)).unwrap();
    assert!(matches!(o, EndorseOutcome::Rejected(ContractError::BadRequest(_))));
    assert_eq!(l.endorsing_peers(&put("k", 3)).len(), 4);
}

#[test]
fn forks_share_history_but_not_future() {
    let (l, clock) = ledger();
    l.submit_and_wait(put("k", 1), WAIT).unwrap();
    let other = ManualClock::new(clock.now());
    let f = l
        .fork(NetworkTopology::single_dc(&orgs(), 2), TimeMode::Virtual(other))
        .unwrap();
    assert_eq!((f.height(), f.state_digest()), (l.height(), l.state_digest()));
    assert_eq!(f.peer_digests().len(), 8);
    f.submit_and_wait(put("k", 2), WAIT).unwrap();
    assert_eq!(f.height(), 2);
    assert_eq!(l.height(), 1);
    assert_eq!(l.query("k", &l.operator()).unwrap().as_deref(), Some("1"));
    let (_, report) = verify_records(&f.records(), EndorsementPolicy::Majority).unwrap();
    assert_eq!((report.blocks, report.state_digest), (2, f.state_digest()));
}
