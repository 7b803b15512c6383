use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ledger::{Ledger, Version};

/// A cached ledger value and the state it was read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CacheEntry {
    pub value: String,
    pub version: Version,
    /// SHA-256 of `value`, hex.
    pub digest: String,
}

impl CacheEntry {
    pub fn new(value: String, version: Version) -> Self {
        let digest = value_digest(&value);
        Self { value, version, digest }
    }
}

pub fn value_digest(value: &str) -> String {
    hex::encode(Sha256::digest(value.as_bytes()))
}

/// Read-side store in front of the ledger. Implementations only need to be
/// a key-value map; coherence comes from invalidation on every commit made
/// through the gateway and from [`verify`].
pub trait ReadCache: Send + Sync {
    fn get(&self, key: &str) -> Option<CacheEntry>;
    fn put(&self, key: &str, entry: CacheEntry);
    fn invalidate_prefix(&self, prefix: &str);
    fn keys(&self) -> Vec<String>;
}

#[derive(Default)]
pub struct MemoryCache {
    map: RwLock<BTreeMap<String, CacheEntry>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ReadCache for MemoryCache {
    fn get(&self, key: &str) -> Option<CacheEntry> {
        self.map.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    fn put(&self, key: &str, entry: CacheEntry) {
        self.map
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.to_string(), entry);
    }

    fn invalidate_prefix(&self, prefix: &str) {
        self.map
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .retain(|k, _| !k.starts_with(prefix));
    }

    fn keys(&self) -> Vec<String> {
        self.map.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub checked: usize,
    pub divergent: Vec<String>,
}

/// Compares every cached entry with the committed ledger state.
pub fn verify(cache: &dyn ReadCache, ledger: &Ledger) -> VerifyReport {
    let operator = ledger.operator();
    let mut report = VerifyReport::default();
    for key in cache.keys() {
        let Some(entry) = cache.get(&key) else { continue };
        report.checked += 1;
        let current = ledger.query_versioned(&key, &operator).ok().flatten();
        let same = current.is_some_and(|v| {
            v.version == entry.version && value_digest(&v.value) == entry.digest && v.value == entry.value
        });
        if !same {
            report.divergent.push(key);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_invalidation() {
        let c = MemoryCache::new();
        c.put("li/P/L1/ca", CacheEntry::new("1".into(), Version::new(1, 0)));
        c.put("li/P/L2/ca", CacheEntry::new("2".into(), Version::new(1, 1)));
        c.invalidate_prefix("li/P/L1/");
        assert_eq!(c.keys(), vec!["li/P/L2/ca".to_string()]);
        assert_eq!(c.get("li/P/L2/ca").unwrap().digest, value_digest("2"));
    }
}
