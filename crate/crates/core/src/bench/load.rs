//! Open-loop load harness over a discrete-event model of the network.
//!
//! The ledger does the functional work (contract execution, MVCC checks,
//! block commits); this module decides *when* each step happens. Every peer
//! is a single FIFO server that runs endorsement executions and block
//! validations, messages cross links whose one-way latency is drawn from
//! the topology, and one orderer cuts blocks by size or timeout. Time is
//! virtual microseconds, so a run is a pure function of its inputs.
//!
//! Latency is measured from submission until the client hears that the
//! block holding the transaction was committed by its gateway peer (the
//! first peer of the topology). Endorsement round trips are included.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::report::{BenchReport, TxKind, TxOutcome};
use super::setup::{compute_ca_request, compute_pas_request, populate, PopulateReport};
use super::BenchError;
use crate::chaincode::{registry, ChaincodeConfig};
use crate::edi::{LineRef, OrgId};
use crate::ledger::{
    BlockCutter, CutterConfig, EndorseOutcome, Ledger, LedgerConfig, LatencyDist, NetworkTopology, TimeMode,
    Transaction, TxRequest, TxValidity,
};
use crate::time::{ManualClock, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TransactionMix {
    pub compute_ca: f64,
    pub compute_pas: f64,
}

impl Default for TransactionMix {
    fn default() -> Self {
        Self {
            compute_ca: 1.0,
            compute_pas: 0.0,
        }
    }
}

impl TransactionMix {
    pub fn only(kind: TxKind) -> Self {
        match kind {
            TxKind::ComputeCa => Self { compute_ca: 1.0, compute_pas: 0.0 },
            TxKind::ComputePas => Self { compute_ca: 0.0, compute_pas: 1.0 },
        }
    }

    /// Kinds with a positive weight.
    pub fn kinds(&self) -> Vec<TxKind> {
        let mut v = Vec::new();
        if self.compute_ca > 0.0 {
            v.push(TxKind::ComputeCa);
        }
        if self.compute_pas > 0.0 {
            v.push(TxKind::ComputePas);
        }
        v
    }
}

/// Where the peers run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", rename_all_fields = "camelCase")]
pub enum TopologySpec {
    /// `peersPerOrg` peers for every org of the corpus, spread round-robin
    /// over `datacenters`; the orderer and the client sit in the first one.
    Generated {
        peers_per_org: usize,
        datacenters: usize,
        inter_dc_lo_ms: f64,
        inter_dc_hi_ms: f64,
    },
    Explicit { topology: NetworkTopology },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Generated {
            peers_per_org: 1,
            datacenters: 1,
            inter_dc_lo_ms: 50.0,
            inter_dc_hi_ms: 130.0,
        }
    }
}

impl TopologySpec {
    pub fn resolve(&self, orgs: &[OrgId]) -> Result<NetworkTopology, BenchError> {
        let t = match self {
            TopologySpec::Explicit { topology } => topology.clone(),
            TopologySpec::Generated {
                peers_per_org,
                datacenters,
                inter_dc_lo_ms,
                inter_dc_hi_ms,
            } => {
                if *peers_per_org == 0 || *datacenters == 0 {
                    return Err(BenchError::InvalidConfig("peersPerOrg and datacenters must be positive".into()));
                }
                if *datacenters == 1 {
                    NetworkTopology::single_dc(orgs, *peers_per_org)
                } else {
                    let mut t = NetworkTopology::geo(orgs, *peers_per_org, *datacenters, *inter_dc_lo_ms, *inter_dc_hi_ms);
                    // geo() gives the orderer a datacenter of its own
                    let extra = t.orderer_datacenter_id.clone();
                    t.links.retain(|l| l.a != extra && l.b != extra);
                    t.orderer_datacenter_id = "dc0".into();
                    t
                }
            }
        };
        t.validate()?;
        Ok(t)
    }
}

/// Modeled CPU cost, in microseconds, of the work a peer does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CostModel {
    pub exec_base_us: u64,
    pub exec_per_read_us: u64,
    pub exec_per_write_us: u64,
    /// Added to every computeCA execution (document parsing and four-way
    /// matching). The calibration knob that keeps computeCA the heavier
    /// transaction regardless of how many keys each one touches.
    pub compute_ca_extra_us: u64,
    pub validate_tx_us: u64,
    /// Checking one endorsement signature.
    pub validate_per_endorsement_us: u64,
    pub commit_per_write_us: u64,
    pub block_overhead_us: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            exec_base_us: 1_400,
            exec_per_read_us: 250,
            exec_per_write_us: 500,
            compute_ca_extra_us: 7_000,
            validate_tx_us: 1_000,
            validate_per_endorsement_us: 500,
            commit_per_write_us: 350,
            block_overhead_us: 3_000,
        }
    }
}

impl CostModel {
    fn exec(&self, kind: TxKind, tx: Option<&Transaction>) -> u64 {
        let extra = match kind {
            TxKind::ComputeCa => self.compute_ca_extra_us,
            TxKind::ComputePas => 0,
        };
        let io = tx.map_or(0, |tx| {
            let rw = &tx.execution.rwset;
            let reads = rw.reads.len() + rw.range_reads.values().map(|r| r.len().max(1)).sum::<usize>();
            self.exec_per_read_us * reads as u64 + self.exec_per_write_us * rw.writes.len() as u64
        });
        self.exec_base_us + extra + io
    }

    fn validate(&self, tx: &Transaction) -> u64 {
        self.validate_tx_us
            + self.validate_per_endorsement_us * tx.endorsements.len() as u64
            + self.commit_per_write_us * tx.execution.rwset.writes.len() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arrivals {
    /// Evenly spaced at 1/sendRate. Phase-locks with the batch timeout at
    /// some rates, which shows up as small latency dips.
    Fixed,
    /// Exponential gaps with mean 1/sendRate.
    #[default]
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct LoadConfig {
    pub transaction_mix: TransactionMix,
    /// Transactions per second.
    pub send_rate: f64,
    pub tx_count: usize,
    pub arrivals: Arrivals,
    pub topology: TopologySpec,
    pub cutter: CutterConfig,
    pub costs: CostModel,
    pub seed: u64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            transaction_mix: TransactionMix::default(),
            send_rate: 50.0,
            tx_count: 2_000,
            arrivals: Arrivals::Poisson,
            topology: TopologySpec::default(),
            cutter: CutterConfig::default(),
            costs: CostModel::default(),
            seed: 1,
        }
    }
}

impl LoadConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.into()));
        if !(self.send_rate.is_finite() && self.send_rate > 0.0) {
            return bad("sendRate must be positive");
        }
        if self.tx_count == 0 {
            return bad("txCount must be positive");
        }
        let m = self.transaction_mix;
        if !(m.compute_ca >= 0.0 && m.compute_pas >= 0.0 && m.compute_ca + m.compute_pas > 0.0) {
            return bad("transactionMix weights must be non-negative and not all zero");
        }
        if self.cutter.block_size == 0 {
            return bad("blockSize must be positive");
        }
        Ok(())
    }
}

/// A ledger holding a populated corpus, ready to be forked for runs.
pub struct Prepared {
    ledger: Ledger,
    tuples: Vec<LineRef>,
    orgs: Vec<OrgId>,
    pub populate: PopulateReport,
}

impl Prepared {
    pub fn tuples(&self) -> &[LineRef] {
        &self.tuples
    }

    pub fn orgs(&self) -> &[OrgId] {
        &self.orgs
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }
}

/// Builds a ledger for the corpus orgs and loads the corpus into it.
pub fn prepare(corpus: &Corpus) -> Result<Prepared, BenchError> {
    let orgs = corpus.orgs();
    let tuples = corpus.tuples();
    if tuples.is_empty() {
        return Err(BenchError::Corpus("corpus has no line items".into()));
    }
    let clock = ManualClock::new(Timestamp(1_700_000_000_000));
    let ledger = Ledger::new(
        LedgerConfig::default(),
        NetworkTopology::single_dc(&orgs, 1),
        registry(&ChaincodeConfig::default()),
        TimeMode::Virtual(clock),
    )?;
    let populate = populate(&ledger, corpus)?;
    Ok(Prepared {
        ledger,
        tuples,
        orgs,
        populate,
    })
}

pub fn run_load(config: &LoadConfig, corpus: &Corpus) -> Result<BenchReport, BenchError> {
    run_prepared(config, &prepare(corpus)?)
}

/// Runs `config` against a fork of the prepared ledger.
pub fn run_prepared(config: &LoadConfig, prepared: &Prepared) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let topology = config.topology.resolve(&prepared.orgs)?;
    let start = prepared.ledger.now();
    let clock = ManualClock::new(start);
    let ledger = prepared.ledger.fork(topology.clone(), TimeMode::Virtual(clock.clone()))?;
    let mut sim = Sim::new(config, &ledger, clock, start, topology);
    sim.schedule_arrivals(&prepared.tuples);
    sim.run()?;
    Ok(BenchReport::build(config, prepared, &sim.outcomes(), sim.blocks.len() as u64, ledger.state_digest()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Job {
    Endorse(usize),
    Validate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Submit(usize),
    /// A job reaches a peer's queue.
    Arrive(usize, Job),
    /// A peer finishes its current job.
    Done(usize),
    /// An endorsement response reaches the client.
    Response(usize),
    /// An endorsed transaction reaches the orderer.
    Order(usize),
    CutTimer,
    /// The client hears that a block was committed.
    Notice(usize),
}

#[derive(Default)]
struct PeerSim {
    queue: VecDeque<Job>,
    busy: Option<Job>,
    /// Links are FIFO: a block never overtakes the previous one.
    last_block_arrival: u64,
}

struct TxSim {
    kind: TxKind,
    request: Option<TxRequest>,
    endorsers: Vec<usize>,
    responses: usize,
    /// Set when the first endorser starts executing.
    endorsed: Option<Result<Transaction, String>>,
    exec_us: u64,
    submit_us: u64,
    end_us: Option<u64>,
    validity: Option<TxValidity>,
}

struct BlockSim {
    txs: Vec<usize>,
    committed: bool,
    validate_us: u64,
}

struct Sim<'a> {
    config: &'a LoadConfig,
    ledger: &'a Ledger,
    clock: ManualClock,
    start: Timestamp,
    topology: NetworkTopology,
    peer_index: HashMap<String, usize>,
    client_dc: String,
    gateway_peer: usize,
    net_rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    seq: u64,
    now: u64,
    peers: Vec<PeerSim>,
    txs: Vec<TxSim>,
    blocks: Vec<BlockSim>,
    cutter: BlockCutter<usize>,
    timer_at: Option<u64>,
}

const MICROS_PER_MS: u64 = 1_000;

fn micros(d: Duration) -> u64 {
    d.as_micros() as u64
}

impl<'a> Sim<'a> {
    fn new(config: &'a LoadConfig, ledger: &'a Ledger, clock: ManualClock, start: Timestamp, topology: NetworkTopology) -> Self {
        let peer_index = topology
            .peers
            .iter()
            .enumerate()
            .map(|(i, p)| (p.peer_id.clone(), i))
            .collect();
        let peers = topology.peers.iter().map(|_| PeerSim::default()).collect();
        let client_dc = topology.orderer_datacenter_id.clone();
        let timeout_us = micros(config.cutter.block_timeout);
        Self {
            config,
            ledger,
            clock,
            start,
            client_dc,
            gateway_peer: 0,
            peer_index,
            net_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x6e65_7477_6f72_6b00),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            peers,
            txs: Vec::new(),
            blocks: Vec::new(),
            cutter: BlockCutter::new(config.cutter.block_size, timeout_us),
            timer_at: None,
            topology,
        }
    }

    fn at(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn link(&mut self, a: &str, b: &str) -> u64 {
        let d = self
            .topology
            .latency(a, b)
            .unwrap_or(LatencyDist::Fixed { ms: 0.0 })
            .sample(&mut self.net_rng);
        micros(d)
    }

    fn dc(&self, peer: usize) -> String {
        self.topology.peers[peer].datacenter_id.clone()
    }

    /// Sets the ledger clock to the simulated instant.
    fn sync_clock(&self) {
        self.clock.set(Timestamp(self.start.as_millis() + self.now / MICROS_PER_MS));
    }

    /// The workload depends only on the seed, never on the topology.
    fn schedule_arrivals(&mut self, tuples: &[LineRef]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mix = self.config.transaction_mix;
        let p_ca = mix.compute_ca / (mix.compute_ca + mix.compute_pas);
        let gap = 1e6 / self.config.send_rate;
        let operator = self.ledger.operator();
        let mut t = 0.0f64;
        for i in 0..self.config.tx_count {
            let line = &tuples[rng.gen_range(0..tuples.len())];
            let kind = if rng.gen::<f64>() < p_ca { TxKind::ComputeCa } else { TxKind::ComputePas };
            let request = match kind {
                TxKind::ComputeCa => compute_ca_request(line, &operator, true),
                TxKind::ComputePas => compute_pas_request(line, &operator, true),
            };
            let submit_us = t.round() as u64;
            self.txs.push(TxSim {
                kind,
                request: Some(request),
                endorsers: Vec::new(),
                responses: 0,
                endorsed: None,
                exec_us: 0,
                submit_us,
                end_us: None,
                validity: None,
            });
            self.at(submit_us, Ev::Submit(i));
            t += match self.config.arrivals {
                Arrivals::Fixed => gap,
                Arrivals::Poisson => -gap * (1.0 - rng.gen::<f64>()).ln(),
            };
        }
    }

    fn run(&mut self) -> Result<(), BenchError> {
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            self.now = t;
            match ev {
                Ev::Submit(i) => self.submit(i),
                Ev::Arrive(p, job) => {
                    self.peers[p].queue.push_back(job);
                    if self.peers[p].busy.is_none() {
                        self.start_next(p)?;
                    }
                }
                Ev::Done(p) => self.done(p)?,
                Ev::Response(i) => self.response(i),
                Ev::Order(i) => {
                    if let Some(batch) = self.cutter.push(i, self.now) {
                        self.deliver(batch);
                    }
                    self.arm_timer();
                }
                Ev::CutTimer => {
                    if self.timer_at == Some(self.now) {
                        self.timer_at = None;
                        if let Some(batch) = self.cutter.poll(self.now) {
                            self.deliver(batch);
                        }
                        self.arm_timer();
                    }
                }
                Ev::Notice(b) => {
                    let block = &self.blocks[b];
                    for &i in &block.txs {
                        self.txs[i].end_us = Some(self.now);
                    }
                }
            }
        }
        if let Some(i) = self.txs.iter().position(|t| t.end_us.is_none()) {
            return Err(BenchError::Setup(format!("transaction {i} never completed")));
        }
        Ok(())
    }

    fn arm_timer(&mut self) {
        if let Some(d) = self.cutter.deadline() {
            if self.timer_at != Some(d) {
                self.timer_at = Some(d);
                self.at(d, Ev::CutTimer);
            }
        }
    }

    fn submit(&mut self, i: usize) {
        let request = self.txs[i].request.as_ref().expect("request present until endorsed");
        let endorsers: Vec<usize> = self
            .ledger
            .endorsing_peers(request)
            .iter()
            .map(|p| self.peer_index[&p.peer_id])
            .collect();
        for &p in &endorsers {
            let (a, b) = (self.client_dc.clone(), self.dc(p));
            let d = self.link(&a, &b);
            self.at(self.now + d, Ev::Arrive(p, Job::Endorse(i)));
        }
        self.txs[i].endorsers = endorsers;
    }

    fn start_next(&mut self, p: usize) -> Result<(), BenchError> {
        let Some(job) = self.peers[p].queue.pop_front() else {
            return Ok(());
        };
        let cost = match job {
            Job::Endorse(i) => {
                if self.txs[i].endorsed.is_none() {
                    self.sync_clock();
                    let request = self.txs[i].request.take().expect("request present");
                    let (_, outcome) = self.ledger.endorse_now(request)?;
                    let kind = self.txs[i].kind;
                    let (result, exec) = match outcome {
                        EndorseOutcome::Endorsed { tx, .. } => {
                            let exec = self.config.costs.exec(kind, Some(&tx));
                            (Ok(tx), exec)
                        }
                        EndorseOutcome::Rejected(e) => (Err(e.to_string()), self.config.costs.exec(kind, None)),
                    };
                    self.txs[i].endorsed = Some(result);
                    self.txs[i].exec_us = exec;
                }
                self.txs[i].exec_us
            }
            Job::Validate(b) => self.blocks[b].validate_us,
        };
        self.peers[p].busy = Some(job);
        self.at(self.now + cost, Ev::Done(p));
        Ok(())
    }

    fn done(&mut self, p: usize) -> Result<(), BenchError> {
        let job = self.peers[p].busy.take().expect("a finished peer was busy");
        match job {
            Job::Endorse(i) => {
                let (a, b) = (self.dc(p), self.client_dc.clone());
                let d = self.link(&a, &b);
                self.at(self.now + d, Ev::Response(i));
            }
            Job::Validate(b) => {
                if !self.blocks[b].committed {
                    self.commit(b)?;
                }
                if p == self.gateway_peer {
                    let (x, y) = (self.dc(p), self.client_dc.clone());
                    let d = self.link(&x, &y);
                    self.at(self.now + d, Ev::Notice(b));
                }
            }
        }
        self.start_next(p)
    }

    /// The client needs a majority of the endorsers it asked.
    fn response(&mut self, i: usize) {
        let tx = &mut self.txs[i];
        tx.responses += 1;
        if tx.responses != tx.endorsers.len() / 2 + 1 {
            return;
        }
        match tx.endorsed {
            Some(Ok(_)) => {
                let (a, b) = (self.client_dc.clone(), self.topology.orderer_datacenter_id.clone());
                let d = self.link(&a, &b);
                self.at(self.now + d, Ev::Order(i));
            }
            _ => tx.end_us = Some(self.now),
        }
    }

    fn deliver(&mut self, batch: Vec<usize>) {
        let costs = self.config.costs;
        let validate_us = costs.block_overhead_us
            + batch
                .iter()
                .map(|&i| match &self.txs[i].endorsed {
                    Some(Ok(tx)) => costs.validate(tx),
                    _ => 0,
                })
                .sum::<u64>();
        let b = self.blocks.len();
        self.blocks.push(BlockSim {
            txs: batch,
            committed: false,
            validate_us,
        });
        let orderer = self.topology.orderer_datacenter_id.clone();
        for p in 0..self.peers.len() {
            let dc = self.dc(p);
            let d = self.link(&orderer, &dc);
            let arrival = (self.now + d).max(self.peers[p].last_block_arrival);
            self.peers[p].last_block_arrival = arrival;
            self.at(arrival, Ev::Arrive(p, Job::Validate(b)));
        }
    }

    /// Blocks reach every peer in order, so the first peer to finish
    /// block `b` finds `b - 1` already committed.
    fn commit(&mut self, b: usize) -> Result<(), BenchError> {
        self.sync_clock();
        let txs: Vec<Transaction> = self.blocks[b]
            .txs
            .iter()
            .map(|&i| match &self.txs[i].endorsed {
                Some(Ok(tx)) => tx.clone(),
                _ => unreachable!("only endorsed transactions are ordered"),
            })
            .collect();
        let validity = self.ledger.commit_batch(txs)?;
        for (&i, v) in self.blocks[b].txs.iter().zip(validity) {
            self.txs[i].validity = Some(v);
        }
        self.blocks[b].committed = true;
        Ok(())
    }

    fn outcomes(&self) -> Vec<TxOutcome> {
        self.txs
            .iter()
            .map(|t| TxOutcome {
                kind: t.kind,
                submit_us: t.submit_us,
                end_us: t.end_us.unwrap_or(t.submit_us),
                validity: t.validity,
                error: match &t.endorsed {
                    Some(Err(e)) => Some(e.clone()),
                    _ => None,
                },
            })
            .collect()
    }
}
