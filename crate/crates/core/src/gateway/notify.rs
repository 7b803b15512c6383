use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::NotifySection;
use super::GatewayError;
use crate::chaincode::event;
use crate::edi::OrgId;
use crate::ledger::{CommittedEvent, TxId};

/// Header carrying the delivery's dedup token on webhook calls.
pub const DEDUP_HEADER: &str = "x-dedup-token";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Trigger {
    CaIssued,
    PaIssued,
    DisputeRaised,
    DisputeResolved,
    AutoApproved,
    Finalized,
}

impl Trigger {
    pub fn from_event(name: &str) -> Option<Self> {
        Some(match name {
            event::CA_ISSUED => Trigger::CaIssued,
            event::PA_ISSUED | event::PA_REVISED => Trigger::PaIssued,
            event::DISPUTE_RAISED => Trigger::DisputeRaised,
            event::DISPUTE_RESOLVED => Trigger::DisputeResolved,
            event::AUTO_APPROVED => Trigger::AutoApproved,
            event::FINALIZED => Trigger::Finalized,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Channel {
    Webhook { url: String },
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Subscription {
    pub subscription_id: String,
    pub user_id: String,
    pub org_id: OrgId,
    pub triggers: BTreeSet<Trigger>,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Delivery {
    pub subscription_id: String,
    pub user_id: String,
    pub trigger: Trigger,
    pub event: String,
    pub tx_id: TxId,
    /// Same for every attempt of one delivery; receivers drop repeats.
    pub dedup_token: String,
    pub payload: Value,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Default)]
struct Shared {
    delivered: Mutex<Vec<Delivery>>,
    dead_letters: Mutex<Vec<Delivery>>,
    pending: Mutex<usize>,
    idle: Condvar,
}

impl Shared {
    fn done(&self) {
        let mut p = self.pending.lock().unwrap_or_else(|e| e.into_inner());
        *p -= 1;
        if *p == 0 {
            self.idle.notify_all();
        }
    }
}

/// Fans contract events out to subscriptions. Webhook calls run on a
/// background thread so a slow or dead endpoint never blocks the caller.
pub struct Notifier {
    subs: RwLock<Vec<Subscription>>,
    seq: AtomicU64,
    shared: Arc<Shared>,
    queue: Mutex<Option<Sender<(String, Delivery)>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Notifier {
    pub fn new(cfg: NotifySection) -> Self {
        let shared = Arc::new(Shared::default());
        let (tx, rx) = mpsc::channel::<(String, Delivery)>();
        let worker = {
            let shared = shared.clone();
            std::thread::Builder::new()
                .name("notifier".into())
                .spawn(move || {
                    let agent = ureq::AgentBuilder::new()
                        .timeout(Duration::from_millis(cfg.timeout_ms))
                        .build();
                    for (url, mut d) in rx {
                        let body = serde_json::json!({
                            "trigger": d.trigger,
                            "event": d.event,
                            "txId": d.tx_id,
                            "payload": d.payload,
                        })
                        .to_string();
                        let mut backoff = Duration::from_millis(cfg.backoff_ms);
                        loop {
                            d.attempts += 1;
                            let res = agent
                                .post(&url)
                                .set(DEDUP_HEADER, &d.dedup_token)
                                .set("content-type", "application/json")
                                .send_string(&body);
                            match res {
                                Ok(_) => {
                                    d.error = None;
                                    shared.delivered.lock().unwrap_or_else(|e| e.into_inner()).push(d);
                                    break;
                                }
                                Err(e) if d.attempts < cfg.webhook_attempts.max(1) => {
                                    tracing::warn!(url = %url, attempt = d.attempts, error = %e, "webhook delivery failed, retrying");
                                    std::thread::sleep(backoff);
                                    backoff *= 2;
                                }
                                Err(e) => {
                                    tracing::error!(url = %url, token = %d.dedup_token, error = %e, "webhook delivery dead-lettered");
                                    d.error = Some(e.to_string());
                                    shared.dead_letters.lock().unwrap_or_else(|e| e.into_inner()).push(d);
                                    break;
                                }
                            }
                        }
                        shared.done();
                    }
                })
                .expect("spawn notifier thread")
        };
        Self {
            subs: RwLock::new(Vec::new()),
            seq: AtomicU64::new(0),
            shared,
            queue: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
        }
    }

    pub fn subscribe(
        &self,
        user_id: &str,
        org_id: &OrgId,
        triggers: BTreeSet<Trigger>,
        channel: Channel,
    ) -> Result<Subscription, GatewayError> {
        if triggers.is_empty() {
            return Err(GatewayError::BadRequest("triggers must not be empty".into()));
        }
        if let Channel::Webhook { url } = &channel {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(GatewayError::BadRequest(format!("webhook url `{url}` must be http(s)")));
            }
        }
        let n = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        let sub = Subscription {
            subscription_id: format!("SUB-{n:06}"),
            user_id: user_id.to_string(),
            org_id: org_id.clone(),
            triggers,
            channel,
        };
        self.subs.write().unwrap_or_else(|e| e.into_inner()).push(sub.clone());
        Ok(sub)
    }

    pub fn subscriptions(&self) -> Vec<Subscription> {
        self.subs.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Delivers each event to every matching subscription whose org is in
    /// the event's scope. Returns the number of deliveries created.
    pub fn dispatch(&self, events: &[CommittedEvent]) -> usize {
        let subs = self.subscriptions();
        if subs.is_empty() {
            return 0;
        }
        let mut per_tx: BTreeMap<&TxId, usize> = BTreeMap::new();
        let mut created = 0;
        for ev in events {
            let idx = per_tx.entry(&ev.tx_id).or_insert(0);
            let i = *idx;
            *idx += 1;
            let Some(trigger) = Trigger::from_event(&ev.event.name) else { continue };
            let scope: BTreeSet<OrgId> = ev
                .event
                .payload
                .get("scope")
                .and_then(|s| serde_json::from_value(s.clone()).ok())
                .unwrap_or_default();
            for sub in subs.iter().filter(|s| s.triggers.contains(&trigger) && scope.contains(&s.org_id)) {
                let d = Delivery {
                    subscription_id: sub.subscription_id.clone(),
                    user_id: sub.user_id.clone(),
                    trigger,
                    event: ev.event.name.clone(),
                    tx_id: ev.tx_id.clone(),
                    dedup_token: format!("{}:{i}:{}", ev.tx_id, sub.subscription_id),
                    payload: ev.event.payload.clone(),
                    attempts: 0,
                    error: None,
                };
                created += 1;
                match &sub.channel {
                    Channel::Log => {
                        tracing::info!(user = %d.user_id, trigger = ?d.trigger, tx = %d.tx_id, "notification");
                        let mut d = d;
                        d.attempts = 1;
                        self.shared.delivered.lock().unwrap_or_else(|e| e.into_inner()).push(d);
                    }
                    Channel::Webhook { url } => {
                        *self.shared.pending.lock().unwrap_or_else(|e| e.into_inner()) += 1;
                        let q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
                        if let Some(tx) = q.as_ref() {
                            if tx.send((url.clone(), d)).is_err() {
                                self.shared.done();
                            }
                        }
                    }
                }
            }
        }
        created
    }

    /// Waits until queued webhook calls have been delivered or dead-lettered.
    pub fn flush(&self, max_wait: Duration) -> bool {
        let deadline = Instant::now() + max_wait;
        let mut p = self.shared.pending.lock().unwrap_or_else(|e| e.into_inner());
        while *p > 0 {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return false;
            }
            p = self.shared.idle.wait_timeout(p, left).unwrap_or_else(|e| e.into_inner()).0;
        }
        true
    }

    pub fn delivered(&self) -> Vec<Delivery> {
        self.shared.delivered.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn dead_letters(&self) -> Vec<Delivery> {
        self.shared.dead_letters.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Drop for Notifier {
    fn drop(&mut self) {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(h) = self.worker.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::ContractEvent;
    use serde_json::json;

    fn ev(tx: &str, name: &str, scope: &[&str]) -> CommittedEvent {
        CommittedEvent {
            tx_id: TxId(tx.into()),
            block: 1,
            creator: "SH".into(),
            event: ContractEvent {
                name: name.into(),
                payload: json!({ "scope": scope }),
            },
        }
    }

    fn quick() -> NotifySection {
        NotifySection {
            webhook_attempts: 2,
            backoff_ms: 1,
            timeout_ms: 200,
        }
    }

    #[test]
    fn only_subscribed_in_scope_triggers_deliver() {
        let n = Notifier::new(quick());
        let t = BTreeSet::from([Trigger::DisputeRaised]);
        n.subscribe("u1", &"SU".into(), t.clone(), Channel::Log).unwrap();
        n.subscribe("u2", &"SU2".into(), t, Channel::Log).unwrap();
        let created = n.dispatch(&[
            ev("t1", event::DISPUTE_RAISED, &["SH", "SU"]),
            ev("t2", event::CA_ISSUED, &["SH", "SU"]),
        ]);
        assert_eq!(created, 1);
        let d = n.delivered();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].user_id, "u1");
        assert_eq!(d[0].dedup_token, "t1:0:SUB-000001");
        assert!(n.subscribe("u1", &"SU".into(), BTreeSet::new(), Channel::Log).is_err());
    }

    #[test]
    fn unreachable_webhook_is_retried_then_dead_lettered() {
        let n = Notifier::new(quick());
        // nothing listens on port 9 of localhost
        let url = "http://127.0.0.1:9/hook".to_string();
        n.subscribe("u1", &"SU".into(), BTreeSet::from([Trigger::CaIssued]), Channel::Webhook { url })
            .unwrap();
        n.dispatch(&[ev("t1", event::CA_ISSUED, &["SU"])]);
        assert!(n.flush(Duration::from_secs(10)));
        let dead = n.dead_letters();
        assert_eq!(dead.len(), 1);
        assert_eq!(dead[0].attempts, 2);
        assert!(n.delivered().is_empty());
    }
}
