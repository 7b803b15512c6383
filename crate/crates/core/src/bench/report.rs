use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::load::{LoadConfig, Prepared};
use crate::ledger::TxValidity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    #[serde(rename = "computeCA")]
    ComputeCa,
    #[serde(rename = "computePAs")]
    ComputePas,
}

impl TxKind {
    pub const ALL: [TxKind; 2] = [TxKind::ComputeCa, TxKind::ComputePas];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::ComputeCa => "computeCA",
            TxKind::ComputePas => "computePAs",
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What happened to one submitted transaction, in virtual microseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutcome {
    pub kind: TxKind,
    pub submit_us: u64,
    /// Commit notice, or the endorsement refusal for failed ones.
    pub end_us: u64,
    /// `None` for transactions refused at endorsement.
    pub validity: Option<TxValidity>,
    pub error: Option<String>,
}

/// Latency of VALID transactions, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn of(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let rank = |q: f64| samples[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            mean: samples.iter().sum::<f64>() / n as f64,
            median: rank(0.5),
            p95: rank(0.95),
            p99: rank(0.99),
            max: samples[n - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KindReport {
    pub submitted: usize,
    pub valid: usize,
    /// Committed but invalidated (MVCC conflict or endorsement policy).
    pub invalid: usize,
    /// Refused by the contract at endorsement.
    pub failed: usize,
    /// VALID transactions per second, from the first submission to the
    /// last commit of this kind.
    pub throughput: f64,
    pub latency: LatencyStats,
}

/// One second of the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub second: u64,
    pub submitted: usize,
    pub committed: usize,
    pub mean_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub config: LoadConfig,
    pub tuples: usize,
    pub submitted: usize,
    pub valid: usize,
    pub invalid: usize,
    pub failed: usize,
    pub blocks: u64,
    /// Virtual seconds from the first submission to the last completion.
    pub duration: f64,
    pub per_type: BTreeMap<TxKind, KindReport>,
    pub time_series: Vec<Sample>,
    pub state_digest: String,
}

fn secs(us: u64) -> f64 {
    us as f64 / 1e6
}

fn kind_report(outcomes: &[&TxOutcome]) -> KindReport {
    let mut r = KindReport {
        submitted: outcomes.len(),
        ..KindReport::default()
    };
    let mut lat = Vec::new();
    let mut last_commit = 0;
    for o in outcomes {
        match o.validity {
            Some(TxValidity::Valid) => {
                r.valid += 1;
                lat.push(secs(o.end_us - o.submit_us));
                last_commit = last_commit.max(o.end_us);
            }
            Some(_) => r.invalid += 1,
            None => r.failed += 1,
        }
    }
    let first_submit = outcomes.iter().map(|o| o.submit_us).min().unwrap_or(0);
    if r.valid > 0 && last_commit > first_submit {
        r.throughput = r.valid as f64 / secs(last_commit - first_submit);
    }
    r.latency = LatencyStats::of(&mut lat);
    r
}

impl BenchReport {
    pub fn build(
        config: &LoadConfig,
        prepared: &Prepared,
        outcomes: &[TxOutcome],
        blocks: u64,
        state_digest: String,
    ) -> Self {
        let mut per_type = BTreeMap::new();
        for kind in TxKind::ALL {
            let of: Vec<&TxOutcome> = outcomes.iter().filter(|o| o.kind == kind).collect();
            if !of.is_empty() {
                per_type.insert(kind, kind_report(&of));
            }
        }
        let all: Vec<&TxOutcome> = outcomes.iter().collect();
        let total = kind_report(&all);
        let end = outcomes.iter().map(|o| o.end_us).max().unwrap_or(0);
        let begin = outcomes.iter().map(|o| o.submit_us).min().unwrap_or(0);

        let mut series: BTreeMap<u64, (usize, usize, f64)> = BTreeMap::new();
        for o in outcomes {
            series.entry(o.submit_us / 1_000_000).or_default().0 += 1;
            if o.validity == Some(TxValidity::Valid) {
                let e = series.entry(o.end_us / 1_000_000).or_default();
                e.1 += 1;
                e.2 += secs(o.end_us - o.submit_us);
            }
        }
        let time_series = series
            .into_iter()
            .map(|(second, (submitted, committed, lat))| Sample {
                second,
                submitted,
                committed,
                mean_latency: if committed > 0 { lat / committed as f64 } else { 0.0 },
            })
            .collect();

        Self {
            config: config.clone(),
            tuples: prepared.tuples().len(),
            submitted: total.submitted,
            valid: total.valid,
            invalid: total.invalid,
            failed: total.failed,
            blocks,
            duration: secs(end - begin),
            per_type,
            time_series,
            state_digest,
        }
    }

    pub fn kind(&self, kind: TxKind) -> Option<&KindReport> {
        self.per_type.get(&kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let mut xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = LatencyStats::of(&mut xs);
        assert_eq!((s.median, s.p95, s.p99, s.max), (50.0, 95.0, 99.0, 100.0));
        assert!((s.mean - 50.5).abs() < 1e-12);
        assert_eq!(LatencyStats::of(&mut []), LatencyStats::default());
        assert_eq!(LatencyStats::of(&mut [3.0]).p99, 3.0);
    }

    #[test]
    fn throughput_counts_valid_over_the_span() {
        let o = |s, e, v| TxOutcome {
            kind: TxKind::ComputeCa,
            submit_us: s,
            end_us: e,
            validity: v,
            error: None,
        };
        let xs = [
            o(0, 1_000_000, Some(TxValidity::Valid)),
            o(500_000, 2_000_000, Some(TxValidity::Valid)),
            o(600_000, 2_000_000, Some(TxValidity::MvccConflict)),
            o(700_000, 800_000, None),
        ];
        let r = kind_report(&xs.iter().collect::<Vec<_>>());
        assert_eq!((r.submitted, r.valid, r.invalid, r.failed), (4, 2, 1, 1));
        assert!((r.throughput - 1.0).abs() < 1e-12);
        assert!((r.latency.mean - 1.25).abs() < 1e-12);
    }
}
