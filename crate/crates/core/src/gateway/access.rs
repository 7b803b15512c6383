//! Which roles may call which endpoint. Data-level scoping (which line items
//! an org may see) is enforced by the ledger on every read on top of this.
//!
//! | endpoint                                   | roles                              |
//! |--------------------------------------------|------------------------------------|
//! | `POST /edi/PO`                             | SHIPPER_AP                         |
//! | `POST /edi/RA`                             | SHIPPER_AP, SHIPPER_RECEIVING      |
//! | `POST /edi/DA`, `POST /edi/CI`             | SUPPLIER_AR                        |
//! | `POST /edi/CARRIER_INVOICE`                | CARRIER_AR                         |
//! | `GET /edi/..`, `/shipments..`, `/pos/..`   | every role except ADMIN            |
//! | `POST /disputes`, comments, resolve        | SHIPPER_AP, SUPPLIER_AR, CARRIER_AR |
//! | `POST /payment-advices/{id}/finalize`      | SHIPPER_AP                         |
//! | `POST /subscriptions`                      | every role except ADMIN            |
//! | `GET /tx/{id}`                             | every role (own org's transactions) |
//! | `POST /shipments`                          | SHIPPER_AP, ADMIN                  |
//! | `POST /events`, `POST /users`, `POST /cron/{job}` | ADMIN                       |

use serde::{Deserialize, Serialize};

use super::users::Role;
use crate::edi::DocumentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    PostEdi(DocumentKind),
    GetEdi,
    GetShipments,
    GetShipmentEvents,
    PostShipment,
    GetClaimAdvice,
    GetPaymentAdvices,
    GetDisputes,
    PostDispute,
    PostDisputeComment,
    PostDisputeResolve,
    FinalizePa,
    PostSubscription,
    GetTx,
    PostEvents,
    PostUser,
    RunCron,
}

impl Endpoint {
    pub fn all() -> Vec<Endpoint> {
        let mut v: Vec<Endpoint> = DocumentKind::ALL.into_iter().map(Endpoint::PostEdi).collect();
        v.extend([
            Endpoint::GetEdi,
            Endpoint::GetShipments,
            Endpoint::GetShipmentEvents,
            Endpoint::PostShipment,
            Endpoint::GetClaimAdvice,
            Endpoint::GetPaymentAdvices,
            Endpoint::GetDisputes,
            Endpoint::PostDispute,
            Endpoint::PostDisputeComment,
            Endpoint::PostDisputeResolve,
            Endpoint::FinalizePa,
            Endpoint::PostSubscription,
            Endpoint::GetTx,
            Endpoint::PostEvents,
            Endpoint::PostUser,
            Endpoint::RunCron,
        ]);
        v
    }

    /// Whether the endpoint reads or writes line-item data, and so is
    /// subject to ledger scoping as well.
    pub fn is_scoped(self) -> bool {
        !matches!(
            self,
            Endpoint::PostSubscription | Endpoint::GetTx | Endpoint::PostEvents | Endpoint::PostUser | Endpoint::RunCron
        )
    }
}

pub fn allowed(role: Role, endpoint: Endpoint) -> bool {
    use Endpoint::*;
    use Role::*;
    match endpoint {
        PostEdi(DocumentKind::Po) => role == ShipperAp,
        PostEdi(DocumentKind::Ra) => matches!(role, ShipperAp | ShipperReceiving),
        PostEdi(DocumentKind::Da | DocumentKind::Ci) => role == SupplierAr,
        PostEdi(DocumentKind::CarrierInvoice) => role == CarrierAr,
        GetEdi | GetShipments | GetShipmentEvents | GetClaimAdvice | GetPaymentAdvices
        | GetDisputes | PostSubscription => role != Admin,
        PostDispute | PostDisputeComment | PostDisputeResolve => {
            matches!(role, ShipperAp | SupplierAr | CarrierAr)
        }
        FinalizePa => role == ShipperAp,
        PostShipment => matches!(role, ShipperAp | Admin),
        GetTx => true,
        PostEvents | PostUser | RunCron => role == Admin,
    }
}
