use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_id, emit_scoped, event, keys, load_parties, load_po, read_scope, require, write_scope,
};
use crate::edi::{Bol, ContainerNo, LineRef, OrgId};
use crate::events::{Milestone, ShipmentStatus, TrackingEvent};
use crate::ledger::contract::{decode_args, Contract, ContractError, TxContext};
use crate::payments::PackedBy;
use crate::time::Timestamp;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum PutEventArgs {
    #[serde(rename_all = "camelCase")]
    Register {
        bol: Bol,
        container_no: ContainerNo,
        lines: Vec<LineRef>,
    },
    Track { event: TrackingEvent },
}

/// Ledger view of a tracked container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShipmentRecord {
    pub bol: Bol,
    pub container_no: ContainerNo,
    pub lines: Vec<LineRef>,
    pub status: ShipmentStatus,
    pub milestone: Milestone,
    pub packed_by: Option<PackedBy>,
    pub event_count: u64,
    pub last_event_at: Option<Timestamp>,
}

pub(super) struct PutEvent {
    pub operator: OrgId,
}

impl Contract for PutEvent {
    fn invoke(&self, ctx: &mut TxContext<'_>, args: &Value) -> Result<Value, ContractError> {
        match decode_args::<PutEventArgs>(args)? {
            PutEventArgs::Register {
                bol,
                container_no,
                lines,
            } => self.register(ctx, bol, container_no, lines),
            PutEventArgs::Track { event } => self.track(ctx, event),
        }
    }
}

impl PutEvent {
    fn register(
        &self,
        ctx: &mut TxContext<'_>,
        bol: Bol,
        container_no: ContainerNo,
        lines: Vec<LineRef>,
    ) -> Result<Value, ContractError> {
        check_id("bol", bol.as_str())?;
        check_id("containerNo", container_no.as_str())?;
        if lines.is_empty() {
            return Err(ContractError::bad("a shipment must be linked to at least one line item"));
        }
        let is_op = ctx.creator() == &self.operator;
        let mut readers = BTreeSet::new();
        for line in &lines {
            let po = load_po(ctx, &line.po_id)?;
            if po.line(&line.line_item_id).is_none() {
                return Err(ContractError::NotFound(format!("line item {line}")));
            }
            require(is_op || ctx.creator() == &po.shipper_id, || {
                format!("only shipper {} may register shipments for {}", po.shipper_id, po.po_id)
            })?;
            readers.extend(load_parties(ctx, line)?.orgs().cloned());
        }

        let key = keys::shipment(&bol, &container_no);
        let mut record: ShipmentRecord = match ctx.get_json(&key)? {
            Some(r) => r,
            None => ShipmentRecord {
                bol: bol.clone(),
                container_no: container_no.clone(),
                lines: Vec::new(),
                status: ShipmentStatus::Tracked,
                milestone: Milestone::None,
                packed_by: None,
                event_count: 0,
                last_event_at: None,
            },
        };
        let added: Vec<LineRef> = lines
            .into_iter()
            .filter(|l| !record.lines.contains(l))
            .collect();
        if added.is_empty() {
            return Ok(json!({ "status": "UNCHANGED", "registration": registration(&record) }));
        }
        let prefix = keys::shipment_prefix(&bol, &container_no);
        let mut scope = read_scope(ctx, &prefix)?;
        let before = scope.len();
        scope.extend(readers);
        if scope.len() != before || before == 0 {
            write_scope(ctx, &prefix, &scope);
        }
        for line in &added {
            let list_key = keys::shipments(line);
            let mut list: BTreeSet<(Bol, ContainerNo)> = ctx.get_json(&list_key)?.unwrap_or_default();
            list.insert((bol.clone(), container_no.clone()));
            ctx.put_json(&list_key, &list);
            if record.milestone >= Milestone::Loaded {
                mark_shipped(ctx, line, record.last_event_at.unwrap_or(ctx.now()));
            }
        }
        record.lines.extend(added);
        ctx.put_json(&key, &record);
        Ok(json!({ "status": "REGISTERED", "registration": registration(&record) }))
    }

    fn track(&self, ctx: &mut TxContext<'_>, ev: TrackingEvent) -> Result<Value, ContractError> {
        ev.validate().map_err(ContractError::bad)?;
        require(ctx.creator() == &self.operator, || {
            "tracking events are accepted from the event feed only".into()
        })?;
        let ev_key = keys::shipment_event(&ev.bol, &ev.container_no, &ev.event_id);
        if ctx.get(&ev_key).is_some() {
            return Ok(json!({ "status": "DUPLICATE", "eventId": ev.event_id }));
        }
        ctx.put_json(&ev_key, &ev);

        let key = keys::shipment(&ev.bol, &ev.container_no);
        let Some(mut record) = ctx.get_json::<ShipmentRecord>(&key)? else {
            return Ok(json!({ "status": "UNREGISTERED", "eventId": ev.event_id }));
        };
        let before = record.milestone;
        record.milestone = record.milestone.max(ev.milestone());
        if record.milestone == Milestone::Delivered {
            record.status = ShipmentStatus::Delivered;
        }
        if let Some(p) = ev.packed_by() {
            record.packed_by = Some(p);
        }
        record.event_count += 1;
        record.last_event_at = Some(record.last_event_at.map_or(ev.occurred_at, |t| t.max(ev.occurred_at)));
        if before < Milestone::Loaded && record.milestone >= Milestone::Loaded {
            for line in record.lines.clone() {
                mark_shipped(ctx, &line, ev.occurred_at);
            }
        }
        ctx.put_json(&key, &record);
        let scope = read_scope(ctx, &keys::shipment_prefix(&ev.bol, &ev.container_no))?;
        emit_scoped(
            ctx,
            event::SHIPMENT_EVENT,
            scope,
            json!({
                "eventId": ev.event_id,
                "bol": ev.bol,
                "containerNo": ev.container_no,
                "eventType": ev.event_type,
                "milestone": record.milestone,
            }),
        );
        Ok(json!({ "status": "RECORDED", "eventId": ev.event_id, "milestone": record.milestone }))
    }
}

fn mark_shipped(ctx: &mut TxContext<'_>, line: &LineRef, at: Timestamp) {
    let key = keys::shipped_at(line);
    if ctx.get(&key).is_none() {
        ctx.put_json(&key, &at);
    }
}

fn registration(r: &ShipmentRecord) -> crate::events::ShipmentRegistration {
    crate::events::ShipmentRegistration {
        bol: r.bol.clone(),
        container_no: r.container_no.clone(),
        lines: r.lines.clone(),
        status: r.status,
    }
}
