//! Shipment tracking events and the processor that turns them, together with
//! document arrivals, into claim and payment generation work.
//!
//! The processor is an off-ledger scheduler. It never talks to the ledger
//! itself: callers feed it documents, registrations and events, take the
//! jobs it marks ready, and report back how each job's transaction ended.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edi::{Bol, ContainerNo, DocumentKind, EdiDocument, LineRef, PoId};
use crate::payments::PackedBy;
use crate::time::Timestamp;

pub const LOADED_ON_TRUCK: &str = "container loaded on truck";
pub const DISPATCHED_FROM_TRUCK: &str = "container dispatched from truck";
pub const PACKED: &str = "container packed";

/// Payload field of a packing event naming who packed the container.
pub const PACKED_BY_FIELD: &str = "packedBy";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("malformed event: {0}")]
    Malformed(String),
    #[error("purchase order {0} has not been ingested")]
    UnknownPo(PoId),
    #[error("shipment {0}/{1} is linked to no line items")]
    NoLines(Bol, ContainerNo),
    #[error("reading event stream: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrackingEvent {
    pub event_id: String,
    pub bol: Bol,
    pub container_no: ContainerNo,
    pub event_type: String,
    pub occurred_at: Timestamp,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

impl TrackingEvent {
    pub fn validate(&self) -> Result<(), EventError> {
        for (field, v) in [
            ("eventId", self.event_id.as_str()),
            ("bol", self.bol.as_str()),
            ("containerNo", self.container_no.as_str()),
            ("eventType", self.event_type.as_str()),
        ] {
            if v.trim().is_empty() {
                return Err(EventError::Malformed(format!("{field} is empty")));
            }
            if field != "eventType" && v.contains('/') {
                return Err(EventError::Malformed(format!("{field} may not contain '/'")));
            }
        }
        if self.event_type == PACKED {
            let by = self.payload.get(PACKED_BY_FIELD).ok_or_else(|| {
                EventError::Malformed(format!("{PACKED} event without {PACKED_BY_FIELD}"))
            })?;
            PackedBy::parse(by)
                .ok_or_else(|| EventError::Malformed(format!("unknown packer {by}")))?;
        }
        Ok(())
    }

    pub fn packed_by(&self) -> Option<PackedBy> {
        if self.event_type != PACKED {
            return None;
        }
        self.payload.get(PACKED_BY_FIELD).and_then(|s| PackedBy::parse(s))
    }

    pub fn milestone(&self) -> Milestone {
        match self.event_type.as_str() {
            LOADED_ON_TRUCK => Milestone::Loaded,
            DISPATCHED_FROM_TRUCK => Milestone::Delivered,
            _ => Milestone::None,
        }
    }
}

/// Furthest lifecycle point a container has reached.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Milestone {
    #[default]
    None,
    Loaded,
    Delivered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ShipmentStatus {
    Tracked,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShipmentRegistration {
    pub bol: Bol,
    pub container_no: ContainerNo,
    pub lines: Vec<LineRef>,
    pub status: ShipmentStatus,
}

/// Maps a provider's event vocabulary onto the canonical event types.
/// Unmapped types pass through unchanged.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventAdaptor {
    pub mapping: BTreeMap<String, String>,
}

impl EventAdaptor {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        Self {
            mapping: pairs
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
        }
    }

    pub fn canonicalize(&self, mut event: TrackingEvent) -> Result<TrackingEvent, EventError> {
        if let Some(to) = self.mapping.get(&event.event_type) {
            event.event_type = to.clone();
        }
        event.validate()?;
        Ok(event)
    }

    /// Reads a JSON-lines event stream. Blank lines and `#` comments are
    /// skipped.
    pub fn read_stream(&self, reader: impl BufRead) -> Result<Vec<TrackingEvent>, EventError> {
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EventError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let raw: TrackingEvent = serde_json::from_str(line)
                .map_err(|e| EventError::Malformed(format!("line {}: {e}", n + 1)))?;
            out.push(self.canonicalize(raw)?);
        }
        Ok(out)
    }

    pub fn replay_file(&self, path: impl AsRef<Path>) -> Result<Vec<TrackingEvent>, EventError> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| EventError::Io(format!("{}: {e}", path.as_ref().display())))?;
        self.read_stream(std::io::BufReader::new(f))
    }
}

/// Contract work the processor hands out.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "job", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Job {
    Pass1 { line: LineRef },
    Pass2 { line: LineRef },
    PaymentAdvices { line: LineRef, regenerate: bool },
}

impl Job {
    pub fn line(&self) -> &LineRef {
        match self {
            Job::Pass1 { line } | Job::Pass2 { line } | Job::PaymentAdvices { line, .. } => line,
        }
    }

    pub fn is_claim_job(&self) -> bool {
        matches!(self, Job::Pass1 { .. } | Job::Pass2 { .. })
    }
}

impl fmt::Display for Job {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Job::Pass1 { line } => write!(f, "pass1 {line}"),
            Job::Pass2 { line } => write!(f, "pass2 {line}"),
            Job::PaymentAdvices { line, regenerate } => {
                write!(f, "payment advices {line}")?;
                if *regenerate {
                    f.write_str(" (regenerate)")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepState {
    #[default]
    Waiting,
    Ready,
    Submitted,
    Done,
    Failed,
}

/// How a job's transaction ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobOutcome {
    Committed,
    /// Lost a key conflict or the ledger was unavailable; run again.
    Retry,
    /// Needs more input (for example a carrier invoice for damage routing).
    Deferred,
    /// Rejected for good.
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LineProgress {
    pub docs: BTreeSet<DocumentKind>,
    pub shipments: BTreeSet<(Bol, ContainerNo)>,
    pub carrier_invoices: usize,
    pub pass1: StepState,
    pub pass2: StepState,
    pub payments: StepState,
    /// Payment advices must be regenerated once the running job finishes.
    pub payments_stale: bool,
    pub payments_regenerate: bool,
    /// The last payment job was deferred; wait for another carrier invoice.
    pub payments_deferred: bool,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Shipment {
    registration: ShipmentRegistration,
    milestone: Milestone,
    packed_by: Option<PackedBy>,
}

#[derive(Debug, Default)]
pub struct EventProcessor {
    pos: BTreeSet<PoId>,
    shipments: BTreeMap<(Bol, ContainerNo), Shipment>,
    lines: BTreeMap<LineRef, LineProgress>,
    seen: HashSet<String>,
    /// Events for shipments nobody registered; kept for the record only.
    unregistered: usize,
}

impl EventProcessor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn progress(&self, line: &LineRef) -> Option<&LineProgress> {
        self.lines.get(line)
    }

    pub fn lines(&self) -> impl Iterator<Item = (&LineRef, &LineProgress)> {
        self.lines.iter()
    }

    pub fn registration(&self, bol: &Bol, container: &ContainerNo) -> Option<&ShipmentRegistration> {
        self.shipments
            .get(&(bol.clone(), container.clone()))
            .map(|s| &s.registration)
    }

    pub fn milestone(&self, bol: &Bol, container: &ContainerNo) -> Milestone {
        self.shipments
            .get(&(bol.clone(), container.clone()))
            .map_or(Milestone::None, |s| s.milestone)
    }

    pub fn unregistered_events(&self) -> usize {
        self.unregistered
    }

    /// Records a committed document and returns any jobs it made ready.
    pub fn document_ingested(&mut self, doc: &EdiDocument) -> Vec<Job> {
        match doc {
            EdiDocument::PurchaseOrder(po) => {
                self.pos.insert(po.po_id.clone());
                let mut ready = Vec::new();
                for line in po.line_refs() {
                    self.lines.entry(line.clone()).or_default().docs.insert(DocumentKind::Po);
                    ready.extend(self.reevaluate(&line));
                }
                ready
            }
            EdiDocument::CarrierInvoice(inv) => {
                let lines: BTreeSet<LineRef> = inv
                    .allocations
                    .iter()
                    .map(|a| LineRef {
                        po_id: a.po_id.clone(),
                        line_item_id: a.line_item_id.clone(),
                    })
                    .collect();
                let mut ready = Vec::new();
                for line in lines {
                    let p = self.lines.entry(line.clone()).or_default();
                    p.carrier_invoices += 1;
                    p.payments_deferred = false;
                    match p.payments {
                        StepState::Done => {
                            p.payments = StepState::Ready;
                            p.payments_regenerate = true;
                        }
                        StepState::Submitted => p.payments_stale = true,
                        _ => {}
                    }
                    ready.extend(self.reevaluate(&line));
                }
                ready
            }
            other => {
                let line = other.line_ref().expect("per-line document");
                self.lines.entry(line.clone()).or_default().docs.insert(other.kind());
                self.reevaluate(&line)
            }
        }
    }

    /// Starts tracking a container for the given line items. Registering
    /// the same container again adds any new lines and is otherwise a no-op.
    pub fn register(
        &mut self,
        bol: Bol,
        container: ContainerNo,
        lines: Vec<LineRef>,
    ) -> Result<ShipmentRegistration, EventError> {
        if lines.is_empty() {
            return Err(EventError::NoLines(bol, container));
        }
        if let Some(l) = lines.iter().find(|l| !self.pos.contains(&l.po_id)) {
            return Err(EventError::UnknownPo(l.po_id.clone()));
        }
        let key = (bol.clone(), container.clone());
        let entry = self.shipments.entry(key.clone()).or_insert_with(|| Shipment {
            registration: ShipmentRegistration {
                bol,
                container_no: container,
                lines: Vec::new(),
                status: ShipmentStatus::Tracked,
            },
            milestone: Milestone::None,
            packed_by: None,
        });
        for l in lines {
            if !entry.registration.lines.contains(&l) {
                entry.registration.lines.push(l);
            }
        }
        let reg = entry.registration.clone();
        for l in &reg.lines {
            self.lines.entry(l.clone()).or_default().shipments.insert(key.clone());
        }
        Ok(reg)
    }

    /// Applies one tracking event. Duplicates and events for unregistered
    /// containers schedule nothing.
    pub fn ingest(&mut self, event: &TrackingEvent) -> Result<Vec<Job>, EventError> {
        event.validate()?;
        if !self.seen.insert(event.event_id.clone()) {
            return Ok(Vec::new());
        }
        let key = (event.bol.clone(), event.container_no.clone());
        let Some(s) = self.shipments.get_mut(&key) else {
            self.unregistered += 1;
            return Ok(Vec::new());
        };
        s.milestone = s.milestone.max(event.milestone());
        if s.milestone == Milestone::Delivered {
            s.registration.status = ShipmentStatus::Delivered;
        }
        if let Some(p) = event.packed_by() {
            s.packed_by = Some(p);
        }
        let lines = s.registration.lines.clone();
        let mut ready = Vec::new();
        for l in &lines {
            ready.extend(self.reevaluate(l));
        }
        Ok(ready)
    }

    fn line_milestones(&self, p: &LineProgress) -> (bool, bool) {
        let ms: Vec<Milestone> = p
            .shipments
            .iter()
            .map(|k| self.shipments.get(k).map_or(Milestone::None, |s| s.milestone))
            .collect();
        let any_loaded = ms.iter().any(|m| *m >= Milestone::Loaded);
        let all_delivered = !ms.is_empty() && ms.iter().all(|m| *m == Milestone::Delivered);
        (any_loaded, all_delivered)
    }

    fn reevaluate(&mut self, line: &LineRef) -> Vec<Job> {
        let Some(p) = self.lines.get(line) else {
            return Vec::new();
        };
        let (any_loaded, all_delivered) = self.line_milestones(p);
        let p = self.lines.get_mut(line).expect("checked above");
        let has = |k| p.docs.contains(&k);
        let mut ready = Vec::new();
        if p.pass1 == StepState::Waiting
            && any_loaded
            && has(DocumentKind::Po)
            && has(DocumentKind::Da)
            && has(DocumentKind::Ci)
        {
            p.pass1 = StepState::Ready;
            ready.push(Job::Pass1 { line: line.clone() });
        }
        if p.pass2 == StepState::Waiting
            && p.pass1 == StepState::Done
            && all_delivered
            && has(DocumentKind::Ra)
        {
            p.pass2 = StepState::Ready;
            ready.push(Job::Pass2 { line: line.clone() });
        }
        if p.payments == StepState::Waiting && p.pass2 == StepState::Done && !p.payments_deferred {
            p.payments = StepState::Ready;
            ready.push(Job::PaymentAdvices {
                line: line.clone(),
                regenerate: p.payments_regenerate,
            });
        } else if p.payments == StepState::Ready {
            // re-armed by a late carrier invoice
            let job = Job::PaymentAdvices {
                line: line.clone(),
                regenerate: p.payments_regenerate,
            };
            ready.push(job);
        }
        ready
    }

    /// Every job currently ready, without claiming it.
    pub fn ready(&self) -> Vec<Job> {
        let mut out = Vec::new();
        for (line, p) in &self.lines {
            if p.pass1 == StepState::Ready {
                out.push(Job::Pass1 { line: line.clone() });
            }
            if p.pass2 == StepState::Ready {
                out.push(Job::Pass2 { line: line.clone() });
            }
            if p.payments == StepState::Ready {
                out.push(Job::PaymentAdvices {
                    line: line.clone(),
                    regenerate: p.payments_regenerate,
                });
            }
        }
        out
    }

    /// Claims ready jobs matching `filter` and marks them submitted. A job
    /// is handed out once until its outcome is reported.
    pub fn take_ready(&mut self, filter: impl Fn(&Job) -> bool) -> Vec<Job> {
        let jobs: Vec<Job> = self.ready().into_iter().filter(|j| filter(j)).collect();
        for j in &jobs {
            *self.step_mut(j) = StepState::Submitted;
        }
        jobs
    }

    fn step_mut(&mut self, job: &Job) -> &mut StepState {
        let p = self.lines.get_mut(job.line()).expect("jobs refer to known lines");
        match job {
            Job::Pass1 { .. } => &mut p.pass1,
            Job::Pass2 { .. } => &mut p.pass2,
            Job::PaymentAdvices { .. } => &mut p.payments,
        }
    }

    /// Reports how a claimed job ended and returns any jobs that became
    /// ready as a result.
    pub fn complete(&mut self, job: &Job, outcome: JobOutcome) -> Vec<Job> {
        let line = job.line().clone();
        if !self.lines.contains_key(&line) {
            return Vec::new();
        }
        let step = self.step_mut(job);
        if *step != StepState::Submitted {
            return Vec::new();
        }
        *step = match outcome {
            JobOutcome::Committed => StepState::Done,
            JobOutcome::Retry => StepState::Ready,
            JobOutcome::Deferred => StepState::Waiting,
            JobOutcome::Failed => StepState::Failed,
        };
        let p = self.lines.get_mut(&line).expect("checked above");
        if outcome == JobOutcome::Failed {
            p.failed.push(job.to_string());
        }
        if let Job::PaymentAdvices { .. } = job {
            match outcome {
                JobOutcome::Committed if p.payments_stale => {
                    p.payments_stale = false;
                    p.payments_regenerate = true;
                    p.payments = StepState::Ready;
                }
                JobOutcome::Committed => p.payments_regenerate = false,
                // wait for the next carrier invoice unless one already came
                JobOutcome::Deferred => p.payments_deferred = !std::mem::take(&mut p.payments_stale),
                _ => {}
            }
        }
        self.reevaluate(&line)
    }

    /// Packing reported for the containers linked to `line`, if consistent.
    pub fn packed_by(&self, line: &LineRef) -> Option<PackedBy> {
        let p = self.lines.get(line)?;
        let mut seen = p
            .shipments
            .iter()
            .filter_map(|k| self.shipments.get(k).and_then(|s| s.packed_by));
        let first = seen.next()?;
        seen.all(|x| x == first).then_some(first)
    }
}
