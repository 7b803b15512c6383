//! Periodic jobs. Each run takes a lease so overlapping runs of the same job
//! never submit the same work twice.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::service::outcome;
use super::{Endpoint, Gateway, GatewayError, UserAccount};
use crate::chaincode::{keys, AUTO_APPROVE_CAS, COMPUTE_CA, COMPUTE_PAS};
use crate::claims::ClaimAdvice;
use crate::edi::LineRef;
use crate::events::{Job, JobOutcome};
use crate::ledger::{LedgerError, TxId, TxRequest, TxStatus, TxValidity};
use crate::lifecycle::auto_approve_due;

pub const GENERATE_CLAIM_ADVICES: &str = "generate-claim-advices";
pub const GENERATE_PAYMENT_ADVICES: &str = "generate-payment-advices";
pub const AUTO_APPROVE: &str = "auto-approve";

const AUTO_APPROVE_BATCH: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobReport {
    pub job: String,
    /// Another run of the same job held the lease.
    pub skipped: bool,
    pub submitted: usize,
    pub committed: usize,
    pub conflicted: usize,
    pub deferred: usize,
    pub failed: usize,
    /// Submissions the ledger refused even after retrying.
    pub unavailable: usize,
    pub tx_ids: Vec<TxId>,
}

impl JobReport {
    fn new(job: &str) -> Self {
        Self {
            job: job.to_string(),
            ..Self::default()
        }
    }
}

enum Submitted {
    Tx(TxId),
    Unavailable,
}

impl Gateway {
    pub fn run_cron(&self, caller: &UserAccount, job: &str) -> Result<JobReport, GatewayError> {
        self.check(caller, Endpoint::RunCron)?;
        match job {
            GENERATE_CLAIM_ADVICES => Ok(self.run_generate_claim_advices()),
            GENERATE_PAYMENT_ADVICES => Ok(self.run_generate_payment_advices()),
            AUTO_APPROVE => Ok(self.run_auto_approve()),
            other => Err(GatewayError::NotFound(format!("cron job {other}"))),
        }
    }

    /// Submits with bounded retries while the ledger is unavailable.
    fn submit_retrying(&self, req: TxRequest) -> Submitted {
        let mut backoff = Duration::from_millis(self.config.cron.backoff_ms);
        for attempt in 0..=self.config.cron.unavailable_retries {
            match self.ledger.submit(req.clone()) {
                Ok(id) => return Submitted::Tx(id),
                Err(LedgerError::Unavailable) if attempt < self.config.cron.unavailable_retries => {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(e) => {
                    tracing::warn!(function = %req.function, error = %e, "cron submission refused");
                    return Submitted::Unavailable;
                }
            }
        }
        Submitted::Unavailable
    }

    fn job_request(&self, job: &Job) -> TxRequest {
        let line = job.line();
        let (function, args) = match job {
            Job::Pass1 { .. } => (COMPUTE_CA, json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "pass": "ONE" })),
            Job::Pass2 { .. } => (COMPUTE_CA, json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "pass": "TWO" })),
            Job::PaymentAdvices { regenerate, .. } => (
                COMPUTE_PAS,
                json!({ "poId": line.po_id, "lineItemId": line.line_item_id, "regenerate": regenerate }),
            ),
        };
        TxRequest::new(function, args, self.operator().clone()).with_scope(keys::line_prefix(line))
    }

    /// Submits every job the processor has ready, waits for all of them and
    /// reports the outcomes back to the processor.
    fn run_jobs(&self, name: &str, lease: &Mutex<()>, filter: fn(&Job) -> bool) -> JobReport {
        let mut report = JobReport::new(name);
        let Ok(_lease) = lease.try_lock() else {
            report.skipped = true;
            return report;
        };
        let jobs = self.processor.lock().unwrap_or_else(|e| e.into_inner()).take_ready(filter);
        let mut pending = Vec::new();
        for job in jobs {
            match self.submit_retrying(self.job_request(&job)) {
                Submitted::Tx(id) => {
                    report.submitted += 1;
                    pending.push((job, id));
                }
                Submitted::Unavailable => {
                    report.unavailable += 1;
                    self.finish(&job, JobOutcome::Retry);
                }
            }
        }
        for (job, id) in pending {
            let result = self.ledger.wait(&id, self.config.tx_wait());
            let o = match &result {
                Ok(st) => self.classify(st, &mut report),
                Err(e) => {
                    tracing::warn!(%job, error = %e, "lost track of job transaction");
                    report.failed += 1;
                    JobOutcome::Retry
                }
            };
            report.tx_ids.push(id);
            self.invalidate(&[keys::line_prefix(job.line())]);
            self.finish(&job, o);
        }
        self.pump_events();
        report
    }

    fn classify(&self, st: &TxStatus, report: &mut JobReport) -> JobOutcome {
        match outcome(st.clone()) {
            Ok(_) => {
                report.committed += 1;
                JobOutcome::Committed
            }
            Err(_) if st.validity == Some(TxValidity::MvccConflict) => {
                report.conflicted += 1;
                JobOutcome::Retry
            }
            Err(GatewayError::Precondition(m)) => {
                tracing::debug!(tx = %st.tx_id, reason = %m, "job deferred");
                report.deferred += 1;
                JobOutcome::Deferred
            }
            Err(GatewayError::Unavailable(_)) | Err(GatewayError::Timeout(_)) => {
                report.unavailable += 1;
                JobOutcome::Retry
            }
            Err(e) => {
                tracing::warn!(tx = %st.tx_id, error = %e, "job failed");
                report.failed += 1;
                JobOutcome::Failed
            }
        }
    }

    fn finish(&self, job: &Job, o: JobOutcome) {
        self.processor.lock().unwrap_or_else(|e| e.into_inner()).complete(job, o);
    }

    pub fn run_generate_claim_advices(&self) -> JobReport {
        self.run_jobs(GENERATE_CLAIM_ADVICES, &self.leases.claims, Job::is_claim_job)
    }

    pub fn run_generate_payment_advices(&self) -> JobReport {
        self.run_jobs(GENERATE_PAYMENT_ADVICES, &self.leases.payments, |j| !j.is_claim_job())
    }

    /// Approves every OPEN claim whose waiting period has elapsed, in
    /// batches of lines per transaction.
    pub fn run_auto_approve(&self) -> JobReport {
        let mut report = JobReport::new(AUTO_APPROVE);
        let Ok(_lease) = self.leases.auto_approve.try_lock() else {
            report.skipped = true;
            return report;
        };
        let now = self.ledger.now();
        let period = self.config.waiting_period();
        let due: Vec<LineRef> = self
            .ledger
            .scan("li/", self.operator())
            .into_iter()
            .filter(|(k, _)| k.ends_with("/ca"))
            .filter_map(|(_, v)| serde_json::from_str::<ClaimAdvice>(&v).ok())
            .filter(|ca| auto_approve_due(ca, now, period))
            .map(|ca| ca.line_ref())
            .collect();
        let mut pending = Vec::new();
        for batch in due.chunks(AUTO_APPROVE_BATCH) {
            let args = json!({ "targets": batch, "waitingPeriodMs": self.config.waiting_period_ms });
            match self.submit_retrying(TxRequest::new(AUTO_APPROVE_CAS, args, self.operator().clone())) {
                Submitted::Tx(id) => {
                    report.submitted += 1;
                    pending.push((batch, id));
                }
                Submitted::Unavailable => report.unavailable += 1,
            }
        }
        for (batch, id) in pending {
            match self.ledger.wait(&id, self.config.tx_wait()) {
                Ok(st) => {
                    self.classify(&st, &mut report);
                }
                Err(_) => report.failed += 1,
            }
            report.tx_ids.push(id);
            let prefixes: Vec<String> = batch.iter().map(keys::line_prefix).collect();
            self.invalidate(&prefixes);
        }
        self.pump_events();
        report
    }
}

/// Runs the cron jobs on wall-clock intervals until stopped or dropped.
pub struct CronScheduler {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl CronScheduler {
    pub fn start(gateway: Arc<Gateway>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("cron".into())
            .spawn(move || {
                let cfg = gateway.config().cron.clone();
                let every = |s: u64| Duration::from_secs(s.max(1));
                let mut next = [Instant::now(); 3];
                while !flag.load(Ordering::SeqCst) {
                    let now = Instant::now();
                    if now >= next[0] {
                        log(&gateway.run_generate_claim_advices());
                        next[0] = now + every(cfg.claims_secs);
                    }
                    if now >= next[1] {
                        log(&gateway.run_generate_payment_advices());
                        next[1] = now + every(cfg.payments_secs);
                    }
                    if now >= next[2] {
                        log(&gateway.run_auto_approve());
                        next[2] = now + every(cfg.auto_approve_secs);
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            })
            .expect("spawn cron thread");
        Self {
            stop,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for CronScheduler {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn log(r: &JobReport) {
    if r.submitted > 0 || r.unavailable > 0 {
        tracing::info!(
            job = %r.job,
            submitted = r.submitted,
            committed = r.committed,
            conflicted = r.conflicted,
            deferred = r.deferred,
            failed = r.failed,
            "cron run"
        );
    }
}
