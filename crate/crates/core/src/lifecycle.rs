//! Claim and payment advice state machines, disputes, finalization and
//! auto-approval.
//!
//! Claims (one per category of a CA):
//!
//! ```text
//! CIP --issue--> OPEN --raise dispute--> AR --resolve--> MA
//!                  \--waiting period elapsed--> AA
//! ```
//!
//! Payment advices:
//!
//! ```text
//! CIP --issue--> AR --finalize (shipper, no open dispute)--> MA
//! ```
//!
//! Disputes on a PA keep it in AR; resolving one does not finalize it. MA and
//! AA are terminal.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{Claim, ClaimAdvice, ClaimCategory};
use crate::edi::{CarrierRole, LineRef, OrgId};
use crate::payments::PaymentAdvice;
use crate::time::{Clock, SystemClock, Timestamp};

pub const DEFAULT_WAITING_PERIOD: Duration = Duration::from_secs(7 * 24 * 3600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AdviceState {
    /// Computation in progress.
    Cip,
    Open,
    /// Awaiting resolution.
    Ar,
    /// Manually approved.
    Ma,
    /// Auto-approved.
    Aa,
}

impl AdviceState {
    pub const ALL: [AdviceState; 5] = [
        AdviceState::Cip,
        AdviceState::Open,
        AdviceState::Ar,
        AdviceState::Ma,
        AdviceState::Aa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdviceState::Cip => "CIP",
            AdviceState::Open => "OPEN",
            AdviceState::Ar => "AR",
            AdviceState::Ma => "MA",
            AdviceState::Aa => "AA",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, AdviceState::Ma | AdviceState::Aa)
    }
}

impl fmt::Display for AdviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Issue,
    RaiseDispute,
    ResolveDispute,
    AutoApprove,
    Finalize,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Issue,
        Action::RaiseDispute,
        Action::ResolveDispute,
        Action::AutoApprove,
        Action::Finalize,
    ];
}

/// Who performs an action, relative to the trade the advice belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActorRole {
    /// Contract functions and cron jobs.
    System,
    Shipper,
    Supplier,
    Carrier,
}

impl ActorRole {
    pub const ALL: [ActorRole; 4] = [
        ActorRole::System,
        ActorRole::Shipper,
        ActorRole::Supplier,
        ActorRole::Carrier,
    ];

    fn is_party(self) -> bool {
        !matches!(self, ActorRole::System)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdviceKind {
    Claim,
    Payment,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LifecycleError {
    #[error("invalid transition: {action:?} on {kind:?} in state {from}")]
    InvalidTransition {
        kind: AdviceKind,
        from: AdviceState,
        action: Action,
    },
    #[error("{role:?} may not perform {action:?}")]
    Forbidden { role: ActorRole, action: Action },
    #[error("organization {0} is not a participant of this trade")]
    Unauthorized(OrgId),
    #[error("payment advice {0} is finalized; disputes cannot be allowed")]
    Finalized(String),
    #[error("an open dispute ({0}) already exists for this target")]
    DuplicateDispute(String),
    #[error("dispute {0} is not open")]
    DisputeClosed(String),
    #[error("payment advice {pa_id} has an open dispute ({dispute_id})")]
    OpenDispute { pa_id: String, dispute_id: String },
    #[error("dispute target does not match: {0}")]
    TargetMismatch(String),
    #[error("claim category {0} is not present on the claim advice")]
    UnknownCategory(ClaimCategory),
    #[error("auto-approve waiting period must be positive")]
    InvalidConfig,
}

/// The transition table for claims. Returns the state after `action`.
pub fn claim_transition(
    from: AdviceState,
    action: Action,
    role: ActorRole,
) -> Result<AdviceState, LifecycleError> {
    use AdviceState::*;
    let allowed_role = match action {
        Action::Issue | Action::AutoApprove => role == ActorRole::System,
        Action::RaiseDispute | Action::ResolveDispute => role.is_party(),
        Action::Finalize => false,
    };
    if !allowed_role {
        return Err(LifecycleError::Forbidden { role, action });
    }
    match (from, action) {
        (Cip, Action::Issue) => Ok(Open),
        (Open, Action::RaiseDispute) => Ok(Ar),
        (Ar, Action::ResolveDispute) => Ok(Ma),
        (Open, Action::AutoApprove) => Ok(Aa),
        _ => Err(LifecycleError::InvalidTransition {
            kind: AdviceKind::Claim,
            from,
            action,
        }),
    }
}

/// The transition table for payment advices.
pub fn payment_transition(
    from: AdviceState,
    action: Action,
    role: ActorRole,
) -> Result<AdviceState, LifecycleError> {
    use AdviceState::*;
    let allowed_role = match action {
        Action::Issue => role == ActorRole::System,
        Action::RaiseDispute | Action::ResolveDispute => role.is_party(),
        Action::Finalize => role == ActorRole::Shipper,
        Action::AutoApprove => false,
    };
    if !allowed_role {
        return Err(LifecycleError::Forbidden { role, action });
    }
    match (from, action) {
        (Cip, Action::Issue) => Ok(Ar),
        (Ar, Action::Finalize) => Ok(Ma),
        _ => Err(LifecycleError::InvalidTransition {
            kind: AdviceKind::Payment,
            from,
            action,
        }),
    }
}

/// Disputes on a PA do not move it; they only need it in AR and the actor to
/// be a party.
pub fn payment_dispute_check(state: AdviceState, action: Action, role: ActorRole) -> Result<(), LifecycleError> {
    if !matches!(action, Action::RaiseDispute | Action::ResolveDispute) || !role.is_party() {
        return Err(LifecycleError::Forbidden { role, action });
    }
    if state != AdviceState::Ar {
        return Err(LifecycleError::InvalidTransition {
            kind: AdviceKind::Payment,
            from: state,
            action,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateChange {
    pub from: AdviceState,
    pub to: AdviceState,
    pub action: Action,
    pub at: Timestamp,
    pub by: String,
}

/// A user acting on behalf of an organization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Participant {
    pub user_id: String,
    pub org_id: OrgId,
}

impl Participant {
    pub fn new(user: impl Into<String>, org: impl Into<String>) -> Self {
        Self {
            user_id: user.into(),
            org_id: OrgId(org.into()),
        }
    }

    fn label(&self) -> String {
        format!("{}@{}", self.user_id, self.org_id)
    }
}

/// The organizations party to one `⟨PO, lineItem⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LineParties {
    pub shipper: OrgId,
    pub supplier: OrgId,
    pub carriers: BTreeMap<OrgId, CarrierRole>,
}

impl LineParties {
    pub fn new(shipper: OrgId, supplier: OrgId) -> Self {
        Self {
            shipper,
            supplier,
            carriers: BTreeMap::new(),
        }
    }

    pub fn role_of(&self, org: &OrgId) -> Option<ActorRole> {
        if org == &self.shipper {
            Some(ActorRole::Shipper)
        } else if org == &self.supplier {
            Some(ActorRole::Supplier)
        } else if self.carriers.contains_key(org) {
            Some(ActorRole::Carrier)
        } else {
            None
        }
    }

    pub fn orgs(&self) -> impl Iterator<Item = &OrgId> {
        std::iter::once(&self.shipper)
            .chain(std::iter::once(&self.supplier))
            .chain(self.carriers.keys())
    }

    fn role_checked(&self, org: &OrgId) -> Result<ActorRole, LifecycleError> {
        self.role_of(org)
            .ok_or_else(|| LifecycleError::Unauthorized(org.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DisputeTarget {
    #[serde(rename_all = "camelCase")]
    Claim {
        ca_id: String,
        line: LineRef,
        category: ClaimCategory,
    },
    #[serde(rename_all = "camelCase")]
    Payment {
        pa_id: String,
        line: LineRef,
        payee_id: OrgId,
    },
}

impl DisputeTarget {
    pub fn line(&self) -> &LineRef {
        match self {
            DisputeTarget::Claim { line, .. } | DisputeTarget::Payment { line, .. } => line,
        }
    }

    /// Stable key for the one-open-dispute-per-target rule.
    pub fn tag(&self) -> String {
        match self {
            DisputeTarget::Claim { category, .. } => format!("ca/{category}"),
            DisputeTarget::Payment { payee_id, .. } => format!("pa/{payee_id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DisputeStatus {
    Open,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Comment {
    pub author: Participant,
    pub at: Timestamp,
    pub text: String,
    pub attachment_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Dispute {
    pub dispute_id: String,
    pub target: DisputeTarget,
    pub raised_by: Participant,
    pub reviewer_org: OrgId,
    pub status: DisputeStatus,
    pub comments: Vec<Comment>,
    pub raised_at: Timestamp,
    pub resolved_at: Option<Timestamp>,
    pub resolved_by: Option<Participant>,
}

/// The advice a dispute operation acts on.
pub enum TargetMut<'a> {
    Claim(&'a mut ClaimAdvice, ClaimCategory),
    Payment(&'a mut PaymentAdvice),
}

impl TargetMut<'_> {
    fn describe(&self) -> DisputeTarget {
        match self {
            TargetMut::Claim(ca, category) => DisputeTarget::Claim {
                ca_id: ca.ca_id.clone(),
                line: ca.line_ref(),
                category: *category,
            },
            TargetMut::Payment(pa) => DisputeTarget::Payment {
                pa_id: pa.pa_id.clone(),
                line: pa.line_ref(),
                payee_id: pa.payee_id.clone(),
            },
        }
    }

    fn apply(&mut self, action: Action, role: ActorRole, at: Timestamp, by: String) -> Result<(), LifecycleError> {
        match self {
            TargetMut::Claim(ca, category) => {
                let claim = ca
                    .claim_mut(*category)
                    .ok_or(LifecycleError::UnknownCategory(*category))?;
                step_claim(claim, action, role, at, by)
            }
            TargetMut::Payment(pa) => {
                payment_dispute_check(pa.state, action, role)?;
                // kept in the history for the audit trail
                pa.history.push(StateChange {
                    from: pa.state,
                    to: pa.state,
                    action,
                    at,
                    by,
                });
                Ok(())
            }
        }
    }

    fn check_transition(&self, action: Action, role: ActorRole) -> Result<(), LifecycleError> {
        match self {
            TargetMut::Claim(ca, category) => {
                let claim = ca
                    .claim(*category)
                    .ok_or(LifecycleError::UnknownCategory(*category))?;
                claim_transition(claim.state, action, role).map(|_| ())
            }
            TargetMut::Payment(pa) => payment_dispute_check(pa.state, action, role),
        }
    }
}

fn step_claim(
    claim: &mut Claim,
    action: Action,
    role: ActorRole,
    at: Timestamp,
    by: String,
) -> Result<(), LifecycleError> {
    let to = claim_transition(claim.state, action, role)?;
    claim.history.push(StateChange {
        from: claim.state,
        to,
        action,
        at,
        by,
    });
    claim.state = to;
    Ok(())
}

fn step_payment(
    pa: &mut PaymentAdvice,
    action: Action,
    role: ActorRole,
    at: Timestamp,
    by: String,
) -> Result<(), LifecycleError> {
    let to = payment_transition(pa.state, action, role)?;
    pa.history.push(StateChange {
        from: pa.state,
        to,
        action,
        at,
        by,
    });
    pa.state = to;
    Ok(())
}

const SYSTEM: &str = "system";

/// CIP → OPEN once the claim's computation is complete.
pub fn issue_claim(claim: &mut Claim, now: Timestamp) -> Result<(), LifecycleError> {
    step_claim(claim, Action::Issue, ActorRole::System, now, SYSTEM.into())?;
    claim.issued_at = Some(now);
    Ok(())
}

/// CIP → AR once the PA's computation is complete.
pub fn issue_payment(pa: &mut PaymentAdvice, now: Timestamp) -> Result<(), LifecycleError> {
    step_payment(pa, Action::Issue, ActorRole::System, now, SYSTEM.into())
}

/// Opens a dispute. `open` is the currently open dispute on the same target,
/// if any.
#[allow(clippy::too_many_arguments)]
pub fn raise_dispute(
    mut target: TargetMut<'_>,
    open: Option<&Dispute>,
    raiser: Participant,
    parties: &LineParties,
    dispute_id: String,
    text: String,
    attachment_digest: Option<String>,
    now: Timestamp,
) -> Result<Dispute, LifecycleError> {
    let role = parties.role_checked(&raiser.org_id)?;
    if let TargetMut::Payment(pa) = &target {
        if pa.state == AdviceState::Ma {
            return Err(LifecycleError::Finalized(pa.pa_id.clone()));
        }
    }
    if let Some(d) = open.filter(|d| d.status == DisputeStatus::Open) {
        return Err(LifecycleError::DuplicateDispute(d.dispute_id.clone()));
    }
    target.check_transition(Action::RaiseDispute, role)?;

    let described = target.describe();
    let reviewer_org = match (&described, role) {
        (DisputeTarget::Claim { .. }, ActorRole::Shipper) => parties.supplier.clone(),
        (DisputeTarget::Payment { payee_id, .. }, ActorRole::Shipper) => payee_id.clone(),
        _ => parties.shipper.clone(),
    };
    target.apply(Action::RaiseDispute, role, now, raiser.label())?;
    Ok(Dispute {
        dispute_id,
        target: described,
        raised_by: raiser.clone(),
        reviewer_org,
        status: DisputeStatus::Open,
        comments: vec![Comment {
            author: raiser,
            at: now,
            text,
            attachment_digest,
        }],
        raised_at: now,
        resolved_at: None,
        resolved_by: None,
    })
}

pub fn add_comment(
    dispute: &mut Dispute,
    author: Participant,
    parties: &LineParties,
    text: String,
    attachment_digest: Option<String>,
    now: Timestamp,
) -> Result<(), LifecycleError> {
    parties.role_checked(&author.org_id)?;
    if dispute.status != DisputeStatus::Open {
        return Err(LifecycleError::DisputeClosed(dispute.dispute_id.clone()));
    }
    dispute.comments.push(Comment {
        author,
        at: now,
        text,
        attachment_digest,
    });
    Ok(())
}

/// Accepts or rejects an open dispute. A disputed claim moves AR → MA either
/// way; a disputed PA stays in AR until finalized.
pub fn resolve_dispute(
    dispute: &mut Dispute,
    mut target: TargetMut<'_>,
    reviewer: Participant,
    parties: &LineParties,
    verdict: Verdict,
    now: Timestamp,
) -> Result<(), LifecycleError> {
    let role = parties.role_checked(&reviewer.org_id)?;
    if dispute.status != DisputeStatus::Open {
        return Err(LifecycleError::DisputeClosed(dispute.dispute_id.clone()));
    }
    if reviewer.org_id != dispute.reviewer_org {
        return Err(LifecycleError::Unauthorized(reviewer.org_id));
    }
    let described = target.describe();
    if described != dispute.target {
        return Err(LifecycleError::TargetMismatch(dispute.dispute_id.clone()));
    }
    target.apply(Action::ResolveDispute, role, now, reviewer.label())?;
    dispute.status = match verdict {
        Verdict::Accept => DisputeStatus::Accepted,
        Verdict::Reject => DisputeStatus::Rejected,
    };
    dispute.resolved_at = Some(now);
    dispute.resolved_by = Some(reviewer);
    Ok(())
}

/// Moves every OPEN claim whose waiting period has elapsed to AA. Returns the
/// categories that changed.
pub fn auto_approve(ca: &mut ClaimAdvice, now: Timestamp, period: Duration) -> Vec<ClaimCategory> {
    let mut changed = Vec::new();
    for claim in ca.claims.values_mut() {
        let due = claim.state == AdviceState::Open
            && claim.issued_at.is_some_and(|at| now.since(at) >= period);
        if due {
            step_claim(claim, Action::AutoApprove, ActorRole::System, now, SYSTEM.into())
                .expect("OPEN claims can always be auto-approved");
            changed.push(claim.category);
        }
    }
    changed
}

/// True if any claim of `ca` is due for auto-approval at `now`.
pub fn auto_approve_due(ca: &ClaimAdvice, now: Timestamp, period: Duration) -> bool {
    ca.claims.values().any(|c| {
        c.state == AdviceState::Open && c.issued_at.is_some_and(|at| now.since(at) >= period)
    })
}

/// AR → MA by the shipper when no dispute is open.
pub fn finalize_payment(
    pa: &mut PaymentAdvice,
    open: Option<&Dispute>,
    actor: Participant,
    parties: &LineParties,
    now: Timestamp,
) -> Result<(), LifecycleError> {
    let role = parties.role_checked(&actor.org_id)?;
    if role != ActorRole::Shipper {
        return Err(LifecycleError::Forbidden {
            role,
            action: Action::Finalize,
        });
    }
    if let Some(d) = open.filter(|d| d.status == DisputeStatus::Open) {
        return Err(LifecycleError::OpenDispute {
            pa_id: pa.pa_id.clone(),
            dispute_id: d.dispute_id.clone(),
        });
    }
    step_payment(pa, Action::Finalize, role, now, actor.label())
}

fn progress_rank(s: AdviceState) -> u8 {
    match s {
        AdviceState::Cip => 0,
        AdviceState::Ar => 1,
        AdviceState::Open => 2,
        AdviceState::Ma | AdviceState::Aa => 3,
    }
}

/// Least-advanced state over the categories of a CA, ordered
/// CIP < AR < OPEN < (MA = AA). Among approved states MA wins over AA.
pub fn aggregate_ca_state(ca: &ClaimAdvice) -> AdviceState {
    aggregate_states(ca.claims.values().map(|c| c.state))
}

pub fn aggregate_states(states: impl IntoIterator<Item = AdviceState>) -> AdviceState {
    states
        .into_iter()
        .min_by_key(|s| (progress_rank(*s), matches!(s, AdviceState::Aa)))
        .unwrap_or(AdviceState::Cip)
}

#[derive(Clone)]
pub struct LifecycleConfig {
    pub auto_approve_waiting_period: Duration,
    pub clock: Arc<dyn Clock>,
}

impl LifecycleConfig {
    pub fn new(period: Duration, clock: Arc<dyn Clock>) -> Result<Self, LifecycleError> {
        if period.is_zero() {
            return Err(LifecycleError::InvalidConfig);
        }
        Ok(Self {
            auto_approve_waiting_period: period,
            clock,
        })
    }
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        Self {
            auto_approve_waiting_period: DEFAULT_WAITING_PERIOD,
            clock: Arc::new(SystemClock),
        }
    }
}

impl fmt::Debug for LifecycleConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LifecycleConfig")
            .field("auto_approve_waiting_period", &self.auto_approve_waiting_period)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::tests::tuple;
    use crate::claims::{compute_ca, compute_pass1};
    use crate::payments::{compute_pas, PackedBy, RouteToPacker};

    fn parties() -> LineParties {
        let mut p = LineParties::new("SHIPPER".into(), "SUPPLIER".into());
        p.carriers.insert("OCM-CO".into(), CarrierRole::Ocm);
        p
    }

    fn shipper() -> Participant {
        Participant::new("ap-clerk", "SHIPPER")
    }

    fn supplier() -> Participant {
        Participant::new("ar-clerk", "SUPPLIER")
    }

    fn open_ca() -> ClaimAdvice {
        let t = tuple(100, 1000, 90, 1200, 85, 80);
        compute_pass1(t.line(), &t.da, &t.ci, Timestamp(1000)).unwrap()
    }

    fn issued_pa() -> PaymentAdvice {
        let t = tuple(100, 1000, 90, 1200, 85, 80);
        let ca = compute_ca(t.line(), &t.da, &t.ra, &t.ci, Timestamp(0)).unwrap();
        compute_pas(&t.ci, &[], &ca, PackedBy::Supplier, &RouteToPacker, Timestamp(0))
            .unwrap()
            .remove(0)
    }

    #[test]
    fn issue_examples() {
        let ca = open_ca();
        assert!(ca.claims.values().all(|c| c.state == AdviceState::Open));
        let mut claim = ca.claims.values().next().unwrap().clone();
        assert_eq!(
            issue_claim(&mut claim, Timestamp(5)),
            Err(LifecycleError::InvalidTransition {
                kind: AdviceKind::Claim,
                from: AdviceState::Open,
                action: Action::Issue
            })
        );
        assert_eq!(issued_pa().state, AdviceState::Ar);
    }

    #[test]
    fn shipper_dispute_goes_to_supplier() {
        let mut ca = open_ca();
        let d = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
            None,
            shipper(),
            &parties(),
            "D1".into(),
            "price above contract".into(),
            None,
            Timestamp(2000),
        )
        .unwrap();
        assert_eq!(ca.claims[&ClaimCategory::PriceDiscrepancy].state, AdviceState::Ar);
        assert_eq!(d.reviewer_org, OrgId::from("SUPPLIER"));
        assert_eq!(d.status, DisputeStatus::Open);
        assert_eq!(d.comments.len(), 1);

        // a second dispute on the same target conflicts
        let err = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
            Some(&d),
            supplier(),
            &parties(),
            "D2".into(),
            "again".into(),
            None,
            Timestamp(2001),
        )
        .unwrap_err();
        assert_eq!(err, LifecycleError::DuplicateDispute("D1".into()));
    }

    #[test]
    fn supplier_dispute_goes_to_shipper() {
        let mut ca = open_ca();
        let d = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::GoodsNotDelivered),
            None,
            supplier(),
            &parties(),
            "D1".into(),
            "we shipped 90".into(),
            None,
            Timestamp(2000),
        )
        .unwrap();
        assert_eq!(d.reviewer_org, OrgId::from("SHIPPER"));
    }

    #[test]
    fn outsiders_cannot_dispute() {
        let mut ca = open_ca();
        let err = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::GoodsNotDelivered),
            None,
            Participant::new("x", "OTHER"),
            &parties(),
            "D1".into(),
            String::new(),
            None,
            Timestamp(0),
        )
        .unwrap_err();
        assert_eq!(err, LifecycleError::Unauthorized("OTHER".into()));
    }

    #[test]
    fn dispute_on_approved_claim_is_invalid() {
        let mut ca = open_ca();
        auto_approve(&mut ca, Timestamp(u64::MAX), Duration::from_secs(1));
        let err = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
            None,
            shipper(),
            &parties(),
            "D1".into(),
            String::new(),
            None,
            Timestamp(0),
        )
        .unwrap_err();
        assert!(matches!(err, LifecycleError::InvalidTransition { from: AdviceState::Aa, .. }));
    }

    #[test]
    fn resolve_moves_claim_to_ma_for_both_verdicts() {
        for verdict in [Verdict::Accept, Verdict::Reject] {
            let mut ca = open_ca();
            let mut d = raise_dispute(
                TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
                None,
                shipper(),
                &parties(),
                "D1".into(),
                "x".into(),
                None,
                Timestamp(10),
            )
            .unwrap();
            // raiser cannot resolve their own dispute
            let err = resolve_dispute(
                &mut d,
                TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
                shipper(),
                &parties(),
                verdict,
                Timestamp(11),
            )
            .unwrap_err();
            assert_eq!(err, LifecycleError::Unauthorized("SHIPPER".into()));
            resolve_dispute(
                &mut d,
                TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
                supplier(),
                &parties(),
                verdict,
                Timestamp(12),
            )
            .unwrap();
            assert_eq!(ca.claims[&ClaimCategory::PriceDiscrepancy].state, AdviceState::Ma);
            assert_ne!(d.status, DisputeStatus::Open);
            let err = add_comment(&mut d, supplier(), &parties(), "late".into(), None, Timestamp(13))
                .unwrap_err();
            assert_eq!(err, LifecycleError::DisputeClosed("D1".into()));
        }
    }

    #[test]
    fn comments_are_appended_in_order() {
        let mut ca = open_ca();
        let mut d = raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
            None,
            shipper(),
            &parties(),
            "D1".into(),
            "first".into(),
            None,
            Timestamp(10),
        )
        .unwrap();
        add_comment(&mut d, supplier(), &parties(), "second".into(), Some("ab12".into()), Timestamp(11)).unwrap();
        add_comment(&mut d, shipper(), &parties(), "third".into(), None, Timestamp(12)).unwrap();
        let texts: Vec<_> = d.comments.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["first", "second", "third"]);
        assert_eq!(d.comments[1].attachment_digest.as_deref(), Some("ab12"));
        assert!(add_comment(&mut d, Participant::new("x", "OTHER"), &parties(), "x".into(), None, Timestamp(13)).is_err());
    }

    #[test]
    fn auto_approve_boundary() {
        let period = Duration::from_millis(500);
        let mut ca = open_ca();
        let issued = Timestamp(1000);
        assert!(auto_approve(&mut ca, issued.saturating_add(period) .saturating_sub(Duration::from_millis(1)), period).is_empty());
        assert!(ca.claims.values().all(|c| c.state == AdviceState::Open));
        assert_eq!(auto_approve(&mut ca, issued.saturating_add(period), period).len(), 3);
        assert!(ca.claims.values().all(|c| c.state == AdviceState::Aa));
        // idempotent
        let before = ca.clone();
        assert!(auto_approve(&mut ca, issued.saturating_add(period), period).is_empty());
        assert_eq!(ca, before);
    }

    #[test]
    fn disputed_claims_are_not_auto_approved() {
        let mut ca = open_ca();
        raise_dispute(
            TargetMut::Claim(&mut ca, ClaimCategory::PriceDiscrepancy),
            None,
            shipper(),
            &parties(),
            "D1".into(),
            "x".into(),
            None,
            Timestamp(1001),
        )
        .unwrap();
        let changed = auto_approve(&mut ca, Timestamp(u64::MAX), Duration::from_secs(1));
        assert!(!changed.contains(&ClaimCategory::PriceDiscrepancy));
        assert_eq!(ca.claims[&ClaimCategory::PriceDiscrepancy].state, AdviceState::Ar);
    }

    #[test]
    fn finalize_rules() {
        let mut pa = issued_pa();
        let p = parties();
        let d = raise_dispute(
            TargetMut::Payment(&mut pa),
            None,
            supplier(),
            &p,
            "D1".into(),
            "short paid".into(),
            None,
            Timestamp(5),
        )
        .unwrap();
        assert_eq!(pa.state, AdviceState::Ar);
        assert!(matches!(
            finalize_payment(&mut pa, Some(&d), shipper(), &p, Timestamp(6)),
            Err(LifecycleError::OpenDispute { .. })
        ));
        assert!(matches!(
            finalize_payment(&mut pa, None, supplier(), &p, Timestamp(6)),
            Err(LifecycleError::Forbidden { .. })
        ));
        finalize_payment(&mut pa, None, shipper(), &p, Timestamp(7)).unwrap();
        assert_eq!(pa.state, AdviceState::Ma);
        let err = raise_dispute(
            TargetMut::Payment(&mut pa),
            None,
            supplier(),
            &p,
            "D2".into(),
            "again".into(),
            None,
            Timestamp(8),
        )
        .unwrap_err();
        assert!(err.to_string().contains("disputes cannot be allowed"));
    }

    #[test]
    fn payment_disputes_need_ar_and_a_party() {
        use AdviceState::*;
        for role in [ActorRole::Shipper, ActorRole::Supplier, ActorRole::Carrier] {
            assert_eq!(payment_dispute_check(Ar, Action::RaiseDispute, role), Ok(()));
            assert_eq!(payment_dispute_check(Ar, Action::ResolveDispute, role), Ok(()));
            for from in [Cip, Open, Ma, Aa] {
                assert!(payment_dispute_check(from, Action::RaiseDispute, role).is_err());
            }
        }
        assert!(payment_dispute_check(Ar, Action::RaiseDispute, ActorRole::System).is_err());
        assert!(payment_dispute_check(Ar, Action::Finalize, ActorRole::Shipper).is_err());
    }

    #[test]
    fn aggregate_examples() {
        use AdviceState::*;
        assert_eq!(aggregate_states([Aa, Aa, Aa, Aa]), Aa);
        assert_eq!(aggregate_states([Cip, Open, Open, Open]), Cip);
        assert_eq!(aggregate_states([Ma, Aa, Aa, Aa]), Ma);
        assert_eq!(aggregate_states([Open, Ar, Ma]), Ar);
        assert_eq!(aggregate_states([Aa, Ma]), Ma);
    }

    #[test]
    fn config_rejects_zero_period() {
        assert!(LifecycleConfig::new(Duration::ZERO, Arc::new(SystemClock)).is_err());
        assert_eq!(LifecycleConfig::default().auto_approve_waiting_period, DEFAULT_WAITING_PERIOD);
    }
}
