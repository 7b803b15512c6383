//! The goods-processor gateway: authenticated, role-gated access to the
//! ledger for the trading partners' systems and users.
//!
//! [`Gateway`] holds everything and is synchronous; [`http`] exposes it as a
//! JSON REST API and [`cron::CronScheduler`] drives the periodic jobs.
//! Every mutating call waits for its transaction to commit and reports the
//! transaction id, so clients can always follow up with `GET /tx/{id}`.

mod access;
pub mod cache;
pub mod config;
pub mod cron;
pub mod http;
pub mod notify;
mod service;
pub mod users;


pub use access::{allowed, Endpoint};
pub use config::GatewayConfig;
pub use cron::{CronScheduler, JobReport};
pub use service::*;
pub use users::{Role, UserAccount};

use serde::Serialize;
use thiserror::Error;

use crate::edi::EdiError;
use crate::events::EventError;
use crate::ledger::{ContractError, LedgerError};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", content = "message", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GatewayError {
    #[error("missing or unknown api key")]
    Unauthenticated,
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("ledger unavailable: {0}")]
    Unavailable(String),
    #[error("timed out: {0}")]
    Timeout(String),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::Unauthenticated => 401,
            GatewayError::Forbidden(_) => 403,
            GatewayError::NotFound(_) => 404,
            GatewayError::BadRequest(_) => 400,
            GatewayError::Conflict(_) => 409,
            GatewayError::Precondition(_) => 422,
            GatewayError::Unavailable(_) => 503,
            GatewayError::Timeout(_) => 504,
        }
    }
}

impl From<LedgerError> for GatewayError {
    fn from(e: LedgerError) -> Self {
        let msg = e.to_string();
        match e {
            LedgerError::AccessDenied { .. } => GatewayError::Forbidden(msg),
            LedgerError::UnknownTx(_) => GatewayError::NotFound(msg),
            LedgerError::UnknownFunction(_) | LedgerError::Registry(_) | LedgerError::Topology(_) => {
                GatewayError::BadRequest(msg)
            }
            LedgerError::Unavailable | LedgerError::Integrity(_) => GatewayError::Unavailable(msg),
            LedgerError::Timeout(_) => GatewayError::Timeout(msg),
        }
    }
}

impl From<ContractError> for GatewayError {
    fn from(e: ContractError) -> Self {
        match e {
            ContractError::BadRequest(m) => GatewayError::BadRequest(m),
            ContractError::NotFound(m) => GatewayError::NotFound(m),
            ContractError::Conflict(m) => GatewayError::Conflict(m),
            ContractError::Forbidden(m) => GatewayError::Forbidden(m),
            ContractError::Precondition(m) => GatewayError::Precondition(m),
        }
    }
}

impl From<EdiError> for GatewayError {
    fn from(e: EdiError) -> Self {
        GatewayError::BadRequest(e.to_string())
    }
}

impl From<EventError> for GatewayError {
    fn from(e: EventError) -> Self {
        GatewayError::BadRequest(e.to_string())
    }
}
