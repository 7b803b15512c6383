use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Position of the transaction that last wrote a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub block: u64,
    pub tx: u32,
}

impl Version {
    pub fn new(block: u64, tx: u32) -> Self {
        Self { block, tx }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block, self.tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    pub version: Version,
    pub value: String,
}

/// Read access to a committed world state.
pub trait StateView {
    fn get(&self, key: &str) -> Option<&VersionedValue>;

    /// Entries whose key starts with `prefix`, in key order.
    fn scan(&self, prefix: &str) -> Vec<(&str, &VersionedValue)>;
}

/// Key → (version, value) map held by each peer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
    /// Sum mod 2^256 of the per-entry hashes, kept current on every write.
    acc: [u64; 4],
}

fn entry_hash(k: &str, v: &VersionedValue) -> [u64; 4] {
    let mut h = Sha256::new();
    h.update((k.len() as u64).to_be_bytes());
    h.update(k.as_bytes());
    h.update(v.version.block.to_be_bytes());
    h.update(v.version.tx.to_be_bytes());
    h.update((v.value.len() as u64).to_be_bytes());
    h.update(v.value.as_bytes());
    let d = h.finalize();
    let mut out = [0u64; 4];
    for (i, limb) in out.iter_mut().enumerate() {
        *limb = u64::from_be_bytes(d[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
    }
    out
}

fn add(acc: &mut [u64; 4], x: [u64; 4]) {
    let mut carry = false;
    for i in (0..4).rev() {
        let (s, c1) = acc[i].overflowing_add(x[i]);
        let (s, c2) = s.overflowing_add(carry as u64);
        acc[i] = s;
        carry = c1 || c2;
    }
}

fn sub(acc: &mut [u64; 4], x: [u64; 4]) {
    let mut borrow = false;
    for i in (0..4).rev() {
        let (s, b1) = acc[i].overflowing_sub(x[i]);
        let (s, b2) = s.overflowing_sub(borrow as u64);
        acc[i] = s;
        borrow = b1 || b2;
    }
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VersionedValue)> {
        self.entries.iter()
    }

    /// Applies a write set at `version`. `None` deletes the key.
    pub fn apply(&mut self, writes: &BTreeMap<String, Option<String>>, version: Version) {
        for (k, v) in writes {
            let old = match v {
                Some(value) => {
                    let new = VersionedValue {
                        version,
                        value: value.clone(),
                    };
                    add(&mut self.acc, entry_hash(k, &new));
                    self.entries.insert(k.clone(), new)
                }
                None => self.entries.remove(k),
            };
            if let Some(old) = old {
                sub(&mut self.acc, entry_hash(k, &old));
            }
        }
    }

    /// Order-independent digest of every entry: the entry count and the
    /// sum of per-entry SHA-256 hashes, hex encoded. O(1).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.entries.len() as u64).to_be_bytes());
        for limb in self.acc {
            h.update(limb.to_be_bytes());
        }
        hex::encode(h.finalize())
    }
}

impl StateView for WorldState {
    fn get(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    fn scan(&self, prefix: &str) -> Vec<(&str, &VersionedValue)> {
        self.entries
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_str(), v))
            .collect()
    }
}
