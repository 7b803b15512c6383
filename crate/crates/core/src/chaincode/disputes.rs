use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_id, emit_scoped, event, keys, load, load_parties, require};
use crate::claims::{ClaimAdvice, ClaimCategory};
use crate::edi::{LineItemId, LineRef, OrgId, PoId};
use crate::ledger::contract::{decode_args, Contract, ContractError, TxContext};
use crate::lifecycle::{
    self, Dispute, DisputeTarget, LineParties, Participant, TargetMut, Verdict,
};
use crate::payments::PaymentAdvice;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum DisputeTargetArg {
    Claim { category: ClaimCategory },
    #[serde(rename_all = "camelCase")]
    Payment { payee_id: OrgId },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum DisputeArgs {
    #[serde(rename_all = "camelCase")]
    Raise {
        user_id: String,
        po_id: PoId,
        line_item_id: LineItemId,
        target: DisputeTargetArg,
        text: String,
        #[serde(default)]
        attachment_digest: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Comment {
        user_id: String,
        dispute_id: String,
        text: String,
        #[serde(default)]
        attachment_digest: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Resolve {
        user_id: String,
        dispute_id: String,
        verdict: Verdict,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FinalizeArgs {
    pub pa_id: String,
    pub user_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AutoApproveArgs {
    pub targets: Vec<LineRef>,
    pub waiting_period_ms: u64,
}

/// The advice a dispute is about, loaded for mutation.
enum Loaded {
    Claim(ClaimAdvice, ClaimCategory),
    Payment(PaymentAdvice),
}

impl Loaded {
    fn fetch(ctx: &mut TxContext<'_>, line: &LineRef, target: &DisputeTargetArg) -> Result<Self, ContractError> {
        Ok(match target {
            DisputeTargetArg::Claim { category } => {
                let ca: ClaimAdvice = load(ctx, &keys::ca(line), &format!("claim advice for {line}"))?;
                if ca.claim(*category).is_none() {
                    return Err(ContractError::NotFound(format!("{category} claim on {line}")));
                }
                Loaded::Claim(ca, *category)
            }
            DisputeTargetArg::Payment { payee_id } => Loaded::Payment(load(
                ctx,
                &keys::pa(line, payee_id),
                &format!("payment advice of {payee_id} on {line}"),
            )?),
        })
    }

    fn as_mut(&mut self) -> TargetMut<'_> {
        match self {
            Loaded::Claim(ca, c) => TargetMut::Claim(ca, *c),
            Loaded::Payment(pa) => TargetMut::Payment(pa),
        }
    }

    fn store(&self, ctx: &mut TxContext<'_>, line: &LineRef) {
        match self {
            Loaded::Claim(ca, _) => ctx.put_json(&keys::ca(line), ca),
            Loaded::Payment(pa) => ctx.put_json(&keys::pa(line, &pa.payee_id), pa),
        }
    }
}

fn target_arg(t: &DisputeTarget) -> DisputeTargetArg {
    match t {
        DisputeTarget::Claim { category, .. } => DisputeTargetArg::Claim { category: *category },
        DisputeTarget::Payment { payee_id, .. } => DisputeTargetArg::Payment {
            payee_id: payee_id.clone(),
        },
    }
}

fn open_dispute(ctx: &mut TxContext<'_>, line: &LineRef, tag: &str) -> Result<Option<Dispute>, ContractError> {
    match ctx.get(&keys::dispute_open(line, tag)) {
        None => Ok(None),
        Some(id) => ctx.get_json(&keys::dispute(line, &id)),
    }
}

fn load_dispute(ctx: &mut TxContext<'_>, id: &str) -> Result<(String, Dispute), ContractError> {
    let key = ctx
        .get(&keys::dispute_index(id))
        .ok_or_else(|| ContractError::NotFound(format!("dispute {id}")))?;
    let d = load(ctx, &key, &format!("dispute {id}"))?;
    Ok((key, d))
}

fn scope(parties: &LineParties) -> Vec<OrgId> {
    parties.orgs().cloned().collect()
}

pub(super) struct ManageDispute;

impl Contract for ManageDispute {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let org = ctx.creator().clone();
        let now = ctx.now();
        match decode_args::<DisputeArgs>(args)? {
            DisputeArgs::Raise {
                user_id,
                po_id,
                line_item_id,
                target,
                text,
                attachment_digest,
            } => {
                check_id("userId", &user_id)?;
                let line = LineRef { po_id, line_item_id };
                let parties = load_parties(ctx, &line)?;
                let mut loaded = Loaded::fetch(ctx, &line, &target)?;
                let tag = loaded_tag(&loaded);
                let open = open_dispute(ctx, &line, &tag)?;
                let id = format!("DSP-{}", ctx.tx_id());
                let dispute = lifecycle::raise_dispute(
                    loaded.as_mut(),
                    open.as_ref(),
                    Participant::new(user_id, org.as_str()),
                    &parties,
                    id.clone(),
                    text,
                    attachment_digest,
                    now,
                )?;
                loaded.store(ctx, &line);
                let key = keys::dispute(&line, &id);
                ctx.put_json(&key, &dispute);
                ctx.put(&keys::dispute_open(&line, &tag), id.clone());
                ctx.put(&keys::dispute_index(&id), key);
                emit_scoped(
                    ctx,
                    event::DISPUTE_RAISED,
                    scope(&parties),
                    json!({
                        "disputeId": id,
                        "line": line,
                        "target": dispute.target,
                        "raisedBy": dispute.raised_by,
                        "reviewerOrg": dispute.reviewer_org,
                    }),
                );
                Ok(json!({ "disputeId": id, "status": dispute.status }))
            }
            DisputeArgs::Comment {
                user_id,
                dispute_id,
                text,
                attachment_digest,
            } => {
                check_id("userId", &user_id)?;
                let (key, mut dispute) = load_dispute(ctx, &dispute_id)?;
                let line = dispute.target.line().clone();
                let parties = load_parties(ctx, &line)?;
                lifecycle::add_comment(
                    &mut dispute,
                    Participant::new(user_id, org.as_str()),
                    &parties,
                    text,
                    attachment_digest,
                    now,
                )?;
                ctx.put_json(&key, &dispute);
                emit_scoped(
                    ctx,
                    event::DISPUTE_COMMENTED,
                    scope(&parties),
                    json!({ "disputeId": dispute_id, "line": line, "comments": dispute.comments.len() }),
                );
                Ok(json!({ "disputeId": dispute_id, "comments": dispute.comments.len() }))
            }
            DisputeArgs::Resolve {
                user_id,
                dispute_id,
                verdict,
            } => {
                check_id("userId", &user_id)?;
                let (key, mut dispute) = load_dispute(ctx, &dispute_id)?;
                let line = dispute.target.line().clone();
                let parties = load_parties(ctx, &line)?;
                let mut loaded = Loaded::fetch(ctx, &line, &target_arg(&dispute.target))?;
                lifecycle::resolve_dispute(
                    &mut dispute,
                    loaded.as_mut(),
                    Participant::new(user_id, org.as_str()),
                    &parties,
                    verdict,
                    now,
                )?;
                loaded.store(ctx, &line);
                ctx.put_json(&key, &dispute);
                ctx.delete(&keys::dispute_open(&line, &dispute.target.tag()));
                emit_scoped(
                    ctx,
                    event::DISPUTE_RESOLVED,
                    scope(&parties),
                    json!({ "disputeId": dispute_id, "line": line, "status": dispute.status }),
                );
                Ok(json!({ "disputeId": dispute_id, "status": dispute.status }))
            }
        }
    }
}

fn loaded_tag(l: &Loaded) -> String {
    match l {
        Loaded::Claim(_, c) => format!("ca/{c}"),
        Loaded::Payment(pa) => format!("pa/{}", pa.payee_id),
    }
}

pub(super) struct FinalizePa;

impl Contract for FinalizePa {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let a: FinalizeArgs = decode_args(args)?;
        check_id("userId", &a.user_id)?;
        let key = ctx
            .get(&keys::pa_index(&a.pa_id))
            .ok_or_else(|| ContractError::NotFound(format!("payment advice {}", a.pa_id)))?;
        let line = keys::parse_line(&key).expect("pa-index points under li/");
        let mut pa: PaymentAdvice = load(ctx, &key, &format!("payment advice {}", a.pa_id))?;
        let parties = load_parties(ctx, &line)?;
        let open = open_dispute(ctx, &line, &format!("pa/{}", pa.payee_id))?;
        let org = ctx.creator().clone();
        lifecycle::finalize_payment(
            &mut pa,
            open.as_ref(),
            Participant::new(a.user_id, org.as_str()),
            &parties,
            ctx.now(),
        )?;
        ctx.put_json(&key, &pa);
        emit_scoped(
            ctx,
            event::FINALIZED,
            scope(&parties),
            json!({ "paId": pa.pa_id, "line": line, "payeeId": pa.payee_id, "netAmount": pa.net_amount }),
        );
        Ok(json!({ "paId": pa.pa_id, "state": pa.state }))
    }
}

pub(super) struct AutoApproveCas {
    pub operator: OrgId,
}

impl Contract for AutoApproveCas {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        let a: AutoApproveArgs = decode_args(args)?;
        require(ctx.creator() == &self.operator, || {
            "auto-approval runs on the platform schedule only".into()
        })?;
        if a.waiting_period_ms == 0 {
            return Err(ContractError::bad("waitingPeriodMs must be positive"));
        }
        let period = Duration::from_millis(a.waiting_period_ms);
        let now = ctx.now();
        let mut approved = Vec::new();
        for line in &a.targets {
            let key = keys::ca(line);
            let Some(mut ca) = ctx.get_json::<ClaimAdvice>(&key)? else {
                continue;
            };
            let changed = lifecycle::auto_approve(&mut ca, now, period);
            if changed.is_empty() {
                continue;
            }
            ctx.put_json(&key, &ca);
            let parties = load_parties(ctx, line)?;
            emit_scoped(
                ctx,
                event::AUTO_APPROVED,
                scope(&parties),
                json!({ "caId": ca.ca_id, "line": line, "categories": changed }),
            );
            approved.push(json!({ "line": line, "categories": changed }));
        }
        Ok(json!({ "approved": approved }))
    }
}
