use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::endorse::EndorsementPolicy;
use super::peer::PeerConfig;
use crate::edi::OrgId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology has no peers")]
    NoPeers,
    #[error("duplicate peer id {0}")]
    DuplicatePeer(String),
    #[error("no latency defined between {0} and {1}")]
    MissingLink(String, String),
    #[error("conflicting latency entries for {0} and {1}")]
    ConflictingLink(String, String),
    #[error("intra-datacenter latency must be below inter-datacenter latency")]
    IntraNotBelowInter,
    #[error("invalid latency range {0}")]
    BadRange(String),
    #[error("reading topology: {0}")]
    Io(String),
}

/// One-way link latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LatencyDist {
    Fixed { ms: f64 },
    Uniform { lo_ms: f64, hi_ms: f64 },
}

impl LatencyDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let ms = match *self {
            LatencyDist::Fixed { ms } => ms,
            LatencyDist::Uniform { lo_ms, hi_ms } => {
                if hi_ms > lo_ms {
                    rng.gen_range(lo_ms..hi_ms)
                } else {
                    lo_ms
                }
            }
        };
        Duration::from_secs_f64(ms / 1000.0)
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            LatencyDist::Fixed { ms } => (ms, ms),
            LatencyDist::Uniform { lo_ms, hi_ms } => (lo_ms, hi_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Link {
    pub a: String,
    pub b: String,
    pub latency: LatencyDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkTopology {
    pub peers: Vec<PeerConfig>,
    pub orderer_datacenter_id: String,
    /// Unordered datacenter pairs, including each datacenter with itself.
    pub links: Vec<Link>,
    #[serde(default)]
    pub endorsement_policy: EndorsementPolicy,
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl NetworkTopology {
    pub fn datacenters(&self) -> BTreeSet<String> {
        self.peers
            .iter()
            .map(|p| p.datacenter_id.clone())
            .chain(std::iter::once(self.orderer_datacenter_id.clone()))
            .collect()
    }

    pub fn orgs(&self) -> BTreeSet<OrgId> {
        self.peers.iter().map(|p| p.org_id.clone()).collect()
    }

    fn link_map(&self) -> Result<BTreeMap<(String, String), LatencyDist>, TopologyError> {
        let mut m = BTreeMap::new();
        for l in &self.links {
            let (lo, hi) = l.latency.bounds();
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(TopologyError::BadRange(format!("{}-{}", l.a, l.b)));
            }
            let key = pair(&l.a, &l.b);
            if let Some(prev) = m.insert(key, l.latency) {
                if prev != l.latency {
                    return Err(TopologyError::ConflictingLink(l.a.clone(), l.b.clone()));
                }
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.peers.is_empty() {
            return Err(TopologyError::NoPeers);
        }
        let mut ids = BTreeSet::new();
        for p in &self.peers {
            if !ids.insert(&p.peer_id) {
                return Err(TopologyError::DuplicatePeer(p.peer_id.clone()));
            }
        }
        let links = self.link_map()?;
        let dcs: Vec<String> = self.datacenters().into_iter().collect();
        let mut intra_max = 0.0f64;
        let mut inter_min = f64::INFINITY;
        for (i, a) in dcs.iter().enumerate() {
            for b in &dcs[i..] {
                let l = links
                    .get(&pair(a, b))
                    .ok_or_else(|| TopologyError::MissingLink(a.clone(), b.clone()))?;
                let (lo, hi) = l.bounds();
                if a == b {
                    intra_max = intra_max.max(hi);
                } else {
                    inter_min = inter_min.min(lo);
                }
            }
        }
        if dcs.len() > 1 && intra_max >= inter_min {
            return Err(TopologyError::IntraNotBelowInter);
        }
        Ok(())
    }

    pub fn latency(&self, a: &str, b: &str) -> Option<LatencyDist> {
        let key = pair(a, b);
        self.links
            .iter()
            .find(|l| pair(&l.a, &l.b) == key)
            .map(|l| l.latency)
    }

    pub fn endorsers(&self) -> impl Iterator<Item = &PeerConfig> {
        self.peers.iter().filter(|p| p.endorser)
    }

    /// Every peer and the orderer in one datacenter with sub-millisecond
    /// links.
    pub fn single_dc(orgs: &[OrgId], peers_per_org: usize) -> Self {
        let mut peers = Vec::new();
        for org in orgs {
            for i in 0..peers_per_org {
                peers.push(PeerConfig {
                    peer_id: format!("{org}-peer{i}"),
                    org_id: org.clone(),
                    datacenter_id: "dc0".into(),
                    endorser: true,
                });
            }
        }
        Self {
            peers,
            orderer_datacenter_id: "dc0".into(),
            links: vec![Link {
                a: "dc0".into(),
                b: "dc0".into(),
                latency: LatencyDist::Uniform { lo_ms: 0.1, hi_ms: 0.9 },
            }],
            endorsement_policy: EndorsementPolicy::Majority,
        }
    }

    /// Peers spread round-robin over `peer_dcs` datacenters with the orderer
    /// in one more; inter-datacenter links are uniform in `[lo_ms, hi_ms]`.
    pub fn geo(orgs: &[OrgId], peers_per_org: usize, peer_dcs: usize, lo_ms: f64, hi_ms: f64) -> Self {
        let mut peers = Vec::new();
        let mut n = 0;
        for org in orgs {
            for i in 0..peers_per_org {
                peers.push(PeerConfig {
                    peer_id: format!("{org}-peer{i}"),
                    org_id: org.clone(),
                    datacenter_id: format!("dc{}", n % peer_dcs.max(1)),
                    endorser: true,
                });
                n += 1;
            }
        }
        let orderer = format!("dc{}", peer_dcs.max(1));
        let all: Vec<String> = (0..=peer_dcs.max(1)).map(|i| format!("dc{i}")).collect();
        let mut links = Vec::new();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i..] {
                let latency = if a == b {
                    LatencyDist::Uniform { lo_ms: 0.1, hi_ms: 0.9 }
                } else {
                    LatencyDist::Uniform { lo_ms, hi_ms }
                };
                links.push(Link {
                    a: a.clone(),
                    b: b.clone(),
                    latency,
                });
            }
        }
        Self {
            peers,
            orderer_datacenter_id: orderer,
            links,
            endorsement_policy: EndorsementPolicy::Majority,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, TopologyError> {
        let t: Self = toml::from_str(s).map_err(|e| TopologyError::Io(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TopologyError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orgs() -> Vec<OrgId> {
        vec!["A".into(), "B".into(), "C".into(), "D".into()]
    }

    #[test]
    fn builtins_validate() {
        NetworkTopology::single_dc(&orgs(), 1).validate().unwrap();
        let g = NetworkTopology::geo(&orgs(), 1, 4, 50.0, 130.0);
        g.validate().unwrap();
        assert_eq!(g.datacenters().len(), 5);
        assert_eq!(g.orderer_datacenter_id, "dc4");
    }

    #[test]
    fn missing_and_inverted_links_are_rejected() {
        let mut g = NetworkTopology::geo(&orgs(), 1, 2, 50.0, 130.0);
        g.links.retain(|l| !(l.a == "dc0" && l.b == "dc1"));
        assert!(matches!(g.validate(), Err(TopologyError::MissingLink(..))));

        let mut g = NetworkTopology::geo(&orgs(), 1, 2, 50.0, 130.0);
        for l in &mut g.links {
            if l.a == l.b {
                l.latency = LatencyDist::Fixed { ms: 60.0 };
            }
        }
        assert_eq!(g.validate(), Err(TopologyError::IntraNotBelowInter));
    }

    #[test]
    fn duplicate_peer_ids_are_rejected() {
        let mut t = NetworkTopology::single_dc(&orgs(), 1);
        let dup = t.peers[0].clone();
        t.peers.push(dup);
        assert!(matches!(t.validate(), Err(TopologyError::DuplicatePeer(_))));
    }

    #[test]
    fn latency_lookup_is_symmetric_and_sampled_in_range() {
        let g = NetworkTopology::geo(&orgs(), 1, 4, 50.0, 130.0);
        assert_eq!(g.latency("dc0", "dc3"), g.latency("dc3", "dc0"));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = g.latency("dc1", "dc4").unwrap();
        for _ in 0..1000 {
            let ms = d.sample(&mut rng).as_secs_f64() * 1000.0;
            assert!((50.0..130.0).contains(&ms));
        }
        let intra = g.latency("dc2", "dc2").unwrap().sample(&mut rng);
        assert!(intra < Duration::from_millis(1));
    }

    #[test]
    fn toml_round_trip() {
        let t = NetworkTopology::geo(&orgs(), 2, 4, 50.0, 130.0);
        let s = toml::to_string(&t).unwrap();
        assert_eq!(NetworkTopology::from_toml_str(&s).unwrap(), t);
    }
}
