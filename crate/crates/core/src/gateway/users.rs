use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::edi::OrgId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    ShipperAp,
    ShipperReceiving,
    SupplierAr,
    CarrierAr,
    Admin,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::ShipperAp,
        Role::ShipperReceiving,
        Role::SupplierAr,
        Role::CarrierAr,
        Role::Admin,
    ];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::ShipperAp => "SHIPPER_AP",
            Role::ShipperReceiving => "SHIPPER_RECEIVING",
            Role::SupplierAr => "SUPPLIER_AR",
            Role::CarrierAr => "CARRIER_AR",
            Role::Admin => "ADMIN",
        };
        f.write_str(s)
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UserAccount {
    pub user_id: String,
    pub org_id: OrgId,
    pub role: Role,
    pub api_key: String,
}

impl fmt::Debug for UserAccount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserAccount")
            .field("user_id", &self.user_id)
            .field("org_id", &self.org_id)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

/// API keys of every account. Each key maps to exactly one account.
#[derive(Default)]
pub struct UserDirectory {
    by_key: RwLock<BTreeMap<String, UserAccount>>,
}

impl UserDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, user: UserAccount) -> Result<(), GatewayError> {
        for (field, v) in [("userId", &user.user_id), ("apiKey", &user.api_key)] {
            if v.trim().is_empty() {
                return Err(GatewayError::BadRequest(format!("{field} must not be empty")));
            }
        }
        let mut g = self.by_key.write().unwrap_or_else(|e| e.into_inner());
        if g.contains_key(&user.api_key) {
            return Err(GatewayError::Conflict("api key already assigned".into()));
        }
        if g.values().any(|u| u.user_id == user.user_id) {
            return Err(GatewayError::Conflict(format!("user {} exists", user.user_id)));
        }
        g.insert(user.api_key.clone(), user);
        Ok(())
    }

    pub fn authenticate(&self, api_key: &str) -> Option<UserAccount> {
        self.by_key
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(api_key)
            .cloned()
    }

    pub fn by_id(&self, user_id: &str) -> Option<UserAccount> {
        self.by_key
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .find(|u| u.user_id == user_id)
            .cloned()
    }

    pub fn orgs(&self) -> Vec<OrgId> {
        let g = self.by_key.read().unwrap_or_else(|e| e.into_inner());
        let mut orgs: Vec<OrgId> = g.values().map(|u| u.org_id.clone()).collect();
        orgs.sort();
        orgs.dedup();
        orgs
    }
}
