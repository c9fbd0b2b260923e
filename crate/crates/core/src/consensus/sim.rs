//! Deterministic network simulator.
//!
//! Time advances in integer ticks. Every tick delivers the messages due at
//! that tick in send order, then ticks each node, then injects workload
//! transactions. All randomness (delays, drops, Byzantine choices, workload)
//! comes from one ChaCha stream seeded by the scenario, so a scenario always
//! produces the same [`SimReport`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::message::{ConsensusMessage, MessageKind};
use super::node::{IbftNode, NodeStats, Outbound, Output};
use super::{max_faulty, quorum_size, ConsensusConfig, ValidatorId};
use crate::crypto::{generate_keypair, Algorithm, Hash32, KeyPair};
use crate::ledger::{replay, Block, LedgerState};
use crate::workload::Workload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Behavior {
    /// Sends nothing.
    Silent,
    /// As leader, sends one block to half of its peers and a conflicting
    /// block to the other half; votes for both.
    EquivocateLeader,
    /// Follows the chain but emits correctly signed votes for random hashes
    /// and rounds instead of its real votes.
    RandomVotes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByzantineSpec {
    pub node: u32,
    pub behavior: Behavior,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDelay {
    pub from: u32,
    pub to: u32,
    pub delay: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DelayModel {
    /// Base delivery delay in ticks; at least 1.
    pub default: u64,
    /// Uniform extra delay in `0..=jitter`.
    pub jitter: u64,
    /// Per-link base delay overrides.
    pub edges: Vec<EdgeDelay>,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            default: 1,
            jitter: 2,
            edges: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Scenario {
    pub n: usize,
    pub byzantine: Vec<ByzantineSpec>,
    pub seed: u64,
    pub round_timeout: u64,
    pub delays: DelayModel,
    /// Probability that any single delivery is lost.
    pub drop_rate: f64,
    pub tx_count: usize,
    /// Ticks between injected transactions.
    pub tx_interval: u64,
    pub target_height: u64,
    pub max_ticks: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n: 4,
            byzantine: Vec::new(),
            seed: 0,
            round_timeout: 20,
            delays: DelayModel::default(),
            drop_rate: 0.0,
            tx_count: 20,
            tx_interval: 3,
            target_height: 5,
            max_ticks: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario needs at least one validator")]
    NoValidators,
    #[error("byzantine node {0} is not a validator")]
    UnknownNode(u32),
    #[error("byzantine node {0} listed twice")]
    DuplicateNode(u32),
    #[error("drop rate {0} is outside [0, 1)")]
    DropRate(f64),
    #[error("round timeout must be positive")]
    ZeroTimeout,
    #[error("edge {from}->{to} names an unknown validator")]
    UnknownEdge { from: u32, to: u32 },
    #[error("scenario is not valid JSON: {0}")]
    Parse(String),
}

impl Scenario {
    pub fn from_json(raw: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(raw).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 {
            return Err(ScenarioError::NoValidators);
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(ScenarioError::DropRate(self.drop_rate));
        }
        if self.round_timeout == 0 {
            return Err(ScenarioError::ZeroTimeout);
        }
        let mut seen = BTreeSet::new();
        for b in &self.byzantine {
            if b.node as usize >= self.n {
                return Err(ScenarioError::UnknownNode(b.node));
            }
            if !seen.insert(b.node) {
                return Err(ScenarioError::DuplicateNode(b.node));
            }
        }
        for e in &self.delays.edges {
            if e.from as usize >= self.n || e.to as usize >= self.n {
                return Err(ScenarioError::UnknownEdge { from: e.from, to: e.to });
            }
        }
        Ok(())
    }

    pub fn behavior_of(&self, node: u32) -> Option<Behavior> {
        self.byzantine.iter().find(|b| b.node == node).map(|b| b.behavior)
    }

    /// More Byzantine nodes than the validator set tolerates.
    pub fn expect_unsafe(&self) -> bool {
        self.byzantine.len() > max_faulty(self.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeReport {
    pub id: u32,
    pub behavior: Option<Behavior>,
    pub height: u64,
    /// SHA-256 over the concatenated block hashes of the finalized chain.
    pub chain_digest: String,
    pub block_hashes: Vec<String>,
    pub decided_rounds: Vec<u32>,
    pub stats: NodeStatsReport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeStatsReport {
    pub bad_signature: u64,
    pub stale: u64,
    pub duplicate: u64,
    pub equivocation_seen: u64,
    pub invalid: u64,
    pub buffered: u64,
}

impl From<&NodeStats> for NodeStatsReport {
    fn from(s: &NodeStats) -> Self {
        NodeStatsReport {
            bad_signature: s.bad_signature,
            stale: s.stale,
            duplicate: s.duplicate,
            equivocation_seen: s.equivocation_seen,
            invalid: s.invalid,
            buffered: s.buffered,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimReport {
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    pub quorum: usize,
    pub byzantine: Vec<ByzantineSpec>,
    pub expect_unsafe: bool,
    /// Heights at which two honest nodes finalized different blocks.
    pub safety_violations: u64,
    /// `(sender, kind, height, round)` slots where an honest node signed two
    /// different hashes.
    pub honest_equivocations: u64,
    /// Honest chains that do not replay from genesis to the same state.
    pub validity_violations: u64,
    pub target_height: u64,
    /// Lowest height finalized by every honest node.
    pub heights_finalized: u64,
    pub target_reached: bool,
    pub ticks: u64,
    pub heights_per_1000_ticks: f64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    /// Distinct heights for which any node broadcast a proposal.
    pub proposed_heights: u64,
    pub all_proposed_finalized: bool,
    pub max_decided_round: u32,
    pub transactions_injected: usize,
    pub transactions_applied: usize,
    pub transactions_rejected: usize,
    pub nodes: Vec<NodeReport>,
}

/// Deterministic Ed25519 validator keys for an in-process validator set.
pub(crate) fn validator_keys(n: usize, seed: u64) -> Vec<KeyPair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_1bf7);
    (0..n)
        .map(|i| generate_keypair(Algorithm::Ed25519, format!("validator-{i}"), &mut rng))
        .collect()
}

pub(crate) fn public_keys(keys: &[KeyPair]) -> Vec<[u8; 32]> {
    keys.iter()
        .map(|k| k.public_key().try_into().expect("ed25519 public keys are 32 bytes"))
        .collect()
}

enum Actor {
    Honest(IbftNode),
    Silent(IbftNode),
    Equivocate {
        node: IbftNode,
        /// Original proposal hash to its conflicting twin.
        twins: BTreeMap<Hash32, Arc<Block>>,
    },
    Random(IbftNode),
}

impl Actor {
    fn node(&self) -> &IbftNode {
        match self {
            Actor::Honest(n) | Actor::Silent(n) | Actor::Random(n) => n,
            Actor::Equivocate { node, .. } => node,
        }
    }

    fn node_mut(&mut self) -> &mut IbftNode {
        match self {
            Actor::Honest(n) | Actor::Silent(n) | Actor::Random(n) => n,
            Actor::Equivocate { node, .. } => node,
        }
    }

    fn is_honest(&self) -> bool {
        matches!(self, Actor::Honest(_))
    }
}

struct Pending {
    at: u64,
    seq: u64,
    to: usize,
    message: ConsensusMessage,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct Network<'a> {
    scenario: &'a Scenario,
    rng: ChaCha20Rng,
    queue: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    sent: u64,
    dropped: u64,
    honest: Vec<bool>,
    /// Signed hashes per honest `(sender, kind, height, round)`.
    votes: BTreeMap<(u32, u8, u64, u32), BTreeSet<Hash32>>,
    proposed: BTreeSet<u64>,
}

impl Network<'_> {
    fn delay(&mut self, from: usize, to: usize) -> u64 {
        let base = self
            .scenario
            .delays
            .edges
            .iter()
            .find(|e| e.from as usize == from && e.to as usize == to)
            .map_or(self.scenario.delays.default, |e| e.delay);
        let jitter = if self.scenario.delays.jitter > 0 {
            self.rng.gen_range(0..=self.scenario.delays.jitter)
        } else {
            0
        };
        base.max(1) + jitter
    }

    fn record(&mut self, from: usize, msg: &ConsensusMessage) {
        if msg.kind == MessageKind::PrePrepare {
            self.proposed.insert(msg.height);
        }
        if !self.honest[from] || msg.kind == MessageKind::RoundChange {
            return;
        }
        if let Some(hash) = msg.block_hash {
            let kind = match msg.kind {
                MessageKind::PrePrepare => 0,
                MessageKind::Prepare => 1,
                _ => 2,
            };
            self.votes
                .entry((from as u32, kind, msg.height, msg.round))
                .or_default()
                .insert(hash);
        }
    }

    fn send(&mut self, now: u64, from: usize, to: usize, message: ConsensusMessage) {
        if to == from {
            return;
        }
        self.sent += 1;
        if self.scenario.drop_rate > 0.0 && self.rng.gen_bool(self.scenario.drop_rate) {
            self.dropped += 1;
            return;
        }
        let at = now + self.delay(from, to);
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            at,
            seq: self.seq,
            to,
            message,
        }));
    }

    fn route(&mut self, now: u64, from: usize, out: Outbound) {
        self.record(from, &out.message);
        match out.to {
            Some(to) => self.send(now, from, to.0 as usize, out.message),
            None => {
                for to in 0..self.scenario.n {
                    self.send(now, from, to, out.message.clone());
                }
            }
        }
    }
}

fn random_hash(rng: &mut ChaCha20Rng) -> Hash32 {
    let mut h = [0u8; 32];
    rng.fill(&mut h);
    Hash32(h)
}

/// Routes what `actor` produced, applying its behaviour.
fn emit(net: &mut Network, now: u64, from: usize, actor: &mut Actor, output: Output) {
    let n = net.scenario.n;
    match actor {
        Actor::Honest(_) => {
            for out in output.messages {
                net.route(now, from, out);
            }
        }
        Actor::Silent(_) => {}
        Actor::Random(node) => {
            for out in output.messages {
                let mut msg = out.message;
                if msg.kind == MessageKind::RoundChange {
                    continue;
                }
                msg.block = None;
                msg.prepared = None;
                msg.justification = Arc::new(Vec::new());
                msg.kind = if net.rng.gen_bool(0.5) {
                    MessageKind::Prepare
                } else {
                    MessageKind::Commit
                };
                msg.round = net.rng.gen_range(0..=msg.round + 2);
                msg.block_hash = Some(random_hash(&mut net.rng));
                msg.resign(node.key());
                net.route(now, from, Outbound { to: out.to, message: msg });
            }
        }
        Actor::Equivocate { node, twins } => {
            let peers: Vec<usize> = (0..n).filter(|&i| i != from).collect();
            let (first, second) = peers.split_at(peers.len() / 2);
            for out in output.messages {
                let msg = out.message;
                if out.to.is_some() || msg.kind == MessageKind::RoundChange {
                    net.route(now, from, Outbound { to: out.to, message: msg });
                    continue;
                }
                let hash = msg.block_hash.expect("votes and proposals name a block");
                if msg.kind == MessageKind::PrePrepare {
                    let mut twin = Block::clone(msg.block.as_ref().expect("proposal body"));
                    twin.timestamp += 1;
                    twins.insert(hash, Arc::new(twin));
                }
                let mut alt = msg.clone();
                match twins.get(&hash) {
                    Some(twin) => {
                        alt.block_hash = Some(twin.hash());
                        if alt.block.is_some() {
                            alt.block = Some(twin.clone());
                        }
                    }
                    None => {
                        alt.block = None;
                        alt.block_hash = Some(random_hash(&mut net.rng));
                    }
                }
                alt.resign(node.key());
                net.record(from, &msg);
                for &to in first {
                    net.send(now, from, to, msg.clone());
                }
                for &to in second {
                    net.send(now, from, to, alt.clone());
                }
            }
        }
    }
}

/// Runs `scenario` to completion and reports on safety, validity and
/// liveness of the honest nodes.
pub fn run_simulation(scenario: &Scenario) -> Result<SimReport, ScenarioError> {
    scenario.validate()?;
    let n = scenario.n;
    let keys = validator_keys(n, scenario.seed);
    let config = Arc::new(ConsensusConfig::new(public_keys(&keys), scenario.round_timeout));
    let mut workload = Workload::new(scenario.seed, 4);
    let genesis_state = LedgerState::from_genesis(&workload.genesis).expect("workload genesis is valid");

    let mut actors: Vec<Actor> = keys
        .into_iter()
        .enumerate()
        .map(|(i, key)| {
            let mut node = IbftNode::new(ValidatorId(i as u32), config.clone(), key, genesis_state.clone());
            node.set_target_height(Some(scenario.target_height));
            match scenario.behavior_of(i as u32) {
                None => Actor::Honest(node),
                Some(Behavior::Silent) => Actor::Silent(node),
                Some(Behavior::EquivocateLeader) => Actor::Equivocate {
                    node,
                    twins: BTreeMap::new(),
                },
                Some(Behavior::RandomVotes) => Actor::Random(node),
            }
        })
        .collect();

    let mut net = Network {
        scenario,
        rng: ChaCha20Rng::seed_from_u64(scenario.seed),
        queue: BinaryHeap::new(),
        seq: 0,
        sent: 0,
        dropped: 0,
        honest: actors.iter().map(Actor::is_honest).collect(),
        votes: BTreeMap::new(),
        proposed: BTreeSet::new(),
    };

    let mut injected = 0usize;
    let mut tick = 0u64;
    let all_done = |actors: &[Actor]| actors.iter().filter(|a| a.is_honest()).all(|a| a.node().stopped());
    while tick < scenario.max_ticks && !all_done(&actors) {
        while let Some(Reverse(p)) = net.queue.peek() {
            if p.at > tick {
                break;
            }
            let Reverse(p) = net.queue.pop().expect("peeked");
            let actor = &mut actors[p.to];
            if matches!(actor, Actor::Silent(_)) {
                continue;
            }
            let output = actor.node_mut().handle_message(p.message, tick);
            emit(&mut net, tick, p.to, actor, output);
        }
        for (i, actor) in actors.iter_mut().enumerate() {
            if matches!(actor, Actor::Silent(_)) {
                continue;
            }
            let output = actor.node_mut().on_tick(tick);
            emit(&mut net, tick, i, actor, output);
        }
        if injected < scenario.tx_count && tick % scenario.tx_interval.max(1) == 0 {
            let tx = workload.next_tx();
            for actor in actors.iter_mut() {
                actor.node_mut().submit(tx.clone());
            }
            injected += 1;
        }
        tick += 1;
    }

    Ok(report(scenario, &config, &actors, &workload.genesis, net, tick, injected))
}

fn report(
    scenario: &Scenario,
    config: &ConsensusConfig,
    actors: &[Actor],
    genesis: &crate::ledger::Genesis,
    net: Network,
    ticks: u64,
    injected: usize,
) -> SimReport {
    let honest: Vec<&IbftNode> = actors.iter().filter(|a| a.is_honest()).map(Actor::node).collect();

    let mut by_height: BTreeMap<u64, BTreeSet<Hash32>> = BTreeMap::new();
    for node in &honest {
        for block in node.chain() {
            by_height.entry(block.height).or_default().insert(block.hash());
        }
    }
    let safety_violations = by_height.values().filter(|s| s.len() > 1).count() as u64;
    let honest_equivocations = net.votes.values().filter(|s| s.len() > 1).count() as u64;

    let validity_violations = honest
        .iter()
        .filter(|node| {
            let blocks: Vec<Block> = node.chain().iter().map(|b| Block::clone(b)).collect();
            match replay(genesis, &blocks) {
                Ok(state) => state.state_root() != node.ledger().state_root(),
                Err(_) => true,
            }
        })
        .count() as u64;

    let heights_finalized = honest.iter().map(|n| n.ledger().height()).min().unwrap_or(0);
    let proposed_heights = net.proposed.len() as u64;
    let all_proposed_finalized = net.proposed.iter().all(|&h| h <= heights_finalized);
    let max_decided_round = honest
        .iter()
        .flat_map(|n| n.decided_rounds().iter().copied())
        .max()
        .unwrap_or(0);

    let (applied, rejected) = honest
        .first()
        .map(|n| {
            n.chain().iter().fold((0, 0), |(a, r), b| (a + b.transactions.len(), r + b.rejected.len()))
        })
        .unwrap_or((0, 0));

    let nodes = actors
        .iter()
        .enumerate()
        .map(|(i, actor)| {
            let node = actor.node();
            let hashes: Vec<Hash32> = node.chain().iter().map(|b| b.hash()).collect();
            let concat: Vec<u8> = hashes.iter().flat_map(|h| h.as_bytes().iter().copied()).collect();
            NodeReport {
                id: i as u32,
                behavior: scenario.behavior_of(i as u32),
                height: node.ledger().height(),
                chain_digest: Hash32::of(&concat).to_hex(),
                block_hashes: hashes.iter().map(Hash32::to_hex).collect(),
                decided_rounds: node.decided_rounds().to_vec(),
                stats: node.stats().into(),
            }
        })
        .collect();

    SimReport {
        seed: scenario.seed,
        n: scenario.n,
        f: config.f(),
        quorum: quorum_size(scenario.n),
        byzantine: scenario.byzantine.clone(),
        expect_unsafe: scenario.expect_unsafe(),
        safety_violations,
        honest_equivocations,
        validity_violations,
        target_height: scenario.target_height,
        heights_finalized,
        target_reached: heights_finalized >= scenario.target_height,
        ticks,
        heights_per_1000_ticks: if ticks == 0 {
            0.0
        } else {
            heights_finalized as f64 * 1000.0 / ticks as f64
        },
        messages_sent: net.sent,
        messages_dropped: net.dropped,
        proposed_heights,
        all_proposed_finalized,
        max_decided_round,
        transactions_injected: injected,
        transactions_applied: applied,
        transactions_rejected: rejected,
        nodes,
    }
}
