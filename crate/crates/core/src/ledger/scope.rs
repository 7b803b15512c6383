//! Per-org read scoping stored in the world state itself.
//!
//! A scope record lives at `_scope/{prefix}` and lists the orgs that may read
//! keys under `prefix`. The longest matching prefix wins (prefixes are tried
//! at every `/` boundary and on the full key). Keys without any matching
//! record are readable only by the operator org.

use std::collections::BTreeSet;

use super::state::StateView;
use crate::edi::OrgId;

pub const SCOPE_PREFIX: &str = "_scope/";

pub fn scope_key(prefix: &str) -> String {
    format!("{SCOPE_PREFIX}{prefix}")
}

/// Candidate prefixes of `key`, longest first.
fn candidates(key: &str) -> impl Iterator<Item = &str> {
    std::iter::once(key).chain(
        key.char_indices()
            .rev()
            .filter(|(_, c)| *c == '/')
            .map(move |(i, _)| &key[..=i]),
    )
}

/// Orgs allowed to read `key`, or `None` if no scope record covers it.
pub fn readers(state: &dyn StateView, key: &str) -> Option<BTreeSet<OrgId>> {
    if key.starts_with(SCOPE_PREFIX) {
        return None;
    }
    for prefix in candidates(key) {
        if let Some(v) = state.get(&scope_key(prefix)) {
            return serde_json::from_str(&v.value).ok();
        }
    }
    None
}

pub fn can_read(state: &dyn StateView, key: &str, org: &OrgId, operator: &OrgId) -> bool {
    org == operator || readers(state, key).is_some_and(|orgs| orgs.contains(org))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::state::{Version, WorldState};

    fn state(records: &[(&str, &[&str])]) -> WorldState {
        let mut s = WorldState::new();
        let writes = records
            .iter()
            .map(|(p, orgs)| {
                let set: BTreeSet<&str> = orgs.iter().copied().collect();
                (scope_key(p), Some(serde_json::to_string(&set).unwrap()))
            })
            .collect();
        s.apply(&writes, Version::new(0, 0));
        s
    }

    #[test]
    fn longest_prefix_wins() {
        let s = state(&[("li/PO1/", &["SHIP"]), ("li/PO1/L1/", &["SHIP", "SUP1"])]);
        let op = OrgId::from("OP");
        assert!(can_read(&s, "li/PO1/L1/ca", &"SUP1".into(), &op));
        assert!(!can_read(&s, "li/PO1/L2/ca", &"SUP1".into(), &op));
        assert!(can_read(&s, "li/PO1/L2/ca", &"SHIP".into(), &op));
    }

    #[test]
    fn deny_by_default_except_operator() {
        let s = state(&[]);
        assert!(!can_read(&s, "po/PO1", &"SHIP".into(), &"OP".into()));
        assert!(can_read(&s, "po/PO1", &"OP".into(), &"OP".into()));
    }

    #[test]
    fn prefix_boundaries_are_path_segments() {
        let s = state(&[("li/PO1/L1/", &["SUP1"])]);
        // L10 is not under L1/
        assert!(!can_read(&s, "li/PO1/L10/ca", &"SUP1".into(), &"OP".into()));
    }

    #[test]
    fn scope_records_are_never_readable_by_orgs() {
        let s = state(&[("li/", &["SUP1"])]);
        assert!(!can_read(&s, "_scope/li/", &"SUP1".into(), &"OP".into()));
    }
}
