use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::users::UserAccount;
use super::GatewayError;
use crate::edi::OrgId;
use crate::ledger::{CutterConfig, LedgerConfig, NetworkTopology};
use crate::lifecycle::DEFAULT_WAITING_PERIOD;

/// Gateway settings, normally read from a TOML file.
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// operator_org = "PLATFORM"
/// waiting_period_ms = 604800000
/// users_path = "users.toml"
///
/// [ledger]
/// topology_path = "topology.json"
/// block_size = 100
/// block_timeout_ms = 500
///
/// [cron]
/// claims_secs = 30
/// payments_secs = 30
/// auto_approve_secs = 3600
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub operator_org: OrgId,
    pub waiting_period_ms: u64,
    /// How long a mutating request waits for its transaction to commit.
    pub tx_wait_ms: u64,
    /// API key table, a TOML file with `[[users]]` entries.
    pub users_path: Option<PathBuf>,
    pub ledger: LedgerSection,
    pub cron: CronSection,
    pub notify: NotifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerSection {
    /// JSON network topology; a single-datacenter network of the known orgs
    /// when absent.
    pub topology_path: Option<PathBuf>,
    pub block_size: usize,
    pub block_timeout_ms: u64,
    pub block_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CronSection {
    pub claims_secs: u64,
    pub payments_secs: u64,
    pub auto_approve_secs: u64,
    /// Attempts when the ledger is unavailable, with doubling backoff.
    pub unavailable_retries: u32,
    pub backoff_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotifySection {
    pub webhook_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            operator_org: OrgId::from("PLATFORM"),
            waiting_period_ms: DEFAULT_WAITING_PERIOD.as_millis() as u64,
            tx_wait_ms: 30_000,
            users_path: None,
            ledger: LedgerSection::default(),
            cron: CronSection::default(),
            notify: NotifySection::default(),
        }
    }
}

impl Default for LedgerSection {
    fn default() -> Self {
        let c = CutterConfig::default();
        Self {
            topology_path: None,
            block_size: c.block_size,
            block_timeout_ms: c.block_timeout.as_millis() as u64,
            block_log: None,
        }
    }
}

impl Default for CronSection {
    fn default() -> Self {
        Self {
            claims_secs: 30,
            payments_secs: 30,
            auto_approve_secs: 3600,
            unavailable_retries: 3,
            backoff_ms: 200,
        }
    }
}

impl Default for NotifySection {
    fn default() -> Self {
        Self {
            webhook_attempts: 3,
            backoff_ms: 100,
            timeout_ms: 2_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UsersFile {
    #[serde(default)]
    users: Vec<UserAccount>,
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::BadRequest(format!("gateway config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::BadRequest(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.users_path,
            &mut cfg.ledger.topology_path,
            &mut cfg.ledger.block_log,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn waiting_period(&self) -> Duration {
        Duration::from_millis(self.waiting_period_ms)
    }

    pub fn tx_wait(&self) -> Duration {
        Duration::from_millis(self.tx_wait_ms)
    }

    pub fn ledger_config(&self) -> LedgerConfig {
        LedgerConfig {
            cutter: CutterConfig {
                block_size: self.ledger.block_size,
                block_timeout: Duration::from_millis(self.ledger.block_timeout_ms),
            },
            operator_org: self.operator_org.clone(),
            block_log: self.ledger.block_log.clone(),
        }
    }

    pub fn users(&self) -> Result<Vec<UserAccount>, GatewayError> {
        let Some(path) = &self.users_path else {
            return Ok(Vec::new());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::BadRequest(format!("{}: {e}", path.display())))?;
        let f: UsersFile = toml::from_str(&text)
            .map_err(|e| GatewayError::BadRequest(format!("{}: {e}", path.display())))?;
        Ok(f.users)
    }

    /// The configured topology, or one peer per org in a single datacenter.
    pub fn topology(&self, orgs: &[OrgId]) -> Result<NetworkTopology, GatewayError> {
        match &self.ledger.topology_path {
            Some(path) => NetworkTopology::load(path)
                .map_err(|e| GatewayError::BadRequest(format!("{}: {e}", path.display()))),
            None => Ok(NetworkTopology::single_dc(orgs, 1)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = GatewayConfig::from_toml("").unwrap();
        assert_eq!(c.cron.claims_secs, 30);
        assert_eq!(c.cron.auto_approve_secs, 3600);
        assert_eq!(c.ledger.block_size, 100);
        assert_eq!(c.ledger.block_timeout_ms, 500);

        let c = GatewayConfig::from_toml("waiting_period_ms = 5\n[ledger]\nblock_size = 7\n").unwrap();
        assert_eq!(c.waiting_period(), Duration::from_millis(5));
        assert_eq!(c.ledger_config().cutter.block_size, 7);
        assert!(GatewayConfig::from_toml("bogus = 1").is_err());
    }
}
