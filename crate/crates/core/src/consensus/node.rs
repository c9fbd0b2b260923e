use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use super::message::{ConsensusMessage, MessageKind, PreparedCertificate};
use super::{ConsensusConfig, ConsensusError, ValidatorId};
use crate::crypto::{Hash32, KeyPair};
use crate::ledger::{Block, BlockOutcome, LedgerState, Transaction};

const FUTURE_BUFFER_LIMIT: usize = 8192;
/// Heights of commit certificates sent per sync request.
const SYNC_BATCH: u64 = 64;

/// A message to send; `to: None` is a broadcast to every other validator.
#[derive(Clone, Debug)]
pub struct Outbound {
    pub to: Option<ValidatorId>,
    pub message: ConsensusMessage,
}

#[derive(Clone, Debug)]
pub struct Finalized {
    pub block: Arc<Block>,
    pub outcome: BlockOutcome,
    /// Round in which the commit quorum formed.
    pub round: u32,
}

#[derive(Debug, Default)]
pub struct Output {
    pub messages: Vec<Outbound>,
    pub finalized: Vec<Finalized>,
}

/// Discard counters. None of these inputs change consensus state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub bad_signature: u64,
    pub stale: u64,
    pub duplicate: u64,
    pub equivocation_seen: u64,
    pub invalid: u64,
    pub buffered: u64,
}

#[derive(Default)]
struct RoundLog {
    accepted: Option<Hash32>,
    prepares: BTreeMap<ValidatorId, ConsensusMessage>,
    commits: BTreeMap<ValidatorId, ConsensusMessage>,
    round_changes: BTreeMap<ValidatorId, ConsensusMessage>,
    sent_prepare: bool,
    sent_commit: bool,
    sent_round_change: bool,
    proposed: bool,
}

struct Candidate {
    block: Arc<Block>,
    next: LedgerState,
    outcome: BlockOutcome,
}

/// One validator's consensus automaton and its copy of the ledger.
///
/// Invariants: at most one prepare and one commit is signed per
/// `(height, round)`; rounds only increase within a height; the finalized
/// chain only grows.
pub struct IbftNode {
    id: ValidatorId,
    config: Arc<ConsensusConfig>,
    key: KeyPair,
    ledger: LedgerState,
    chain: Vec<Arc<Block>>,
    commit_certs: BTreeMap<u64, Vec<ConsensusMessage>>,
    round: u32,
    prepared: Option<Arc<PreparedCertificate>>,
    rounds: BTreeMap<u32, RoundLog>,
    candidates: BTreeMap<Hash32, Candidate>,
    invalid: BTreeSet<Hash32>,
    future: VecDeque<ConsensusMessage>,
    local: VecDeque<(ConsensusMessage, bool)>,
    now: u64,
    deadline: u64,
    mempool: Vec<Transaction>,
    mempool_ids: BTreeSet<Hash32>,
    target_height: Option<u64>,
    wall_time: Option<i64>,
    stats: NodeStats,
    decided_rounds: Vec<u32>,
}

impl IbftNode {
    /// `key` must be the Ed25519 key registered for `id` in `config`.
    pub fn new(id: ValidatorId, config: Arc<ConsensusConfig>, key: KeyPair, genesis: LedgerState) -> Self {
        let deadline = config.timeout(0);
        IbftNode {
            id,
            config,
            key,
            ledger: genesis,
            chain: Vec::new(),
            commit_certs: BTreeMap::new(),
            round: 0,
            prepared: None,
            rounds: BTreeMap::new(),
            candidates: BTreeMap::new(),
            invalid: BTreeSet::new(),
            future: VecDeque::new(),
            local: VecDeque::new(),
            now: 0,
            deadline,
            mempool: Vec::new(),
            mempool_ids: BTreeSet::new(),
            target_height: None,
            wall_time: None,
            stats: NodeStats::default(),
            decided_rounds: Vec::new(),
        }
    }

    /// Stop taking part once `height` blocks are final. Sync requests from
    /// lagging peers are still answered.
    pub fn set_target_height(&mut self, height: Option<u64>) {
        self.target_height = height;
    }

    /// Timestamp stamped on proposed blocks. Defaults to the tick count.
    pub fn set_wall_time(&mut self, unix_seconds: Option<i64>) {
        self.wall_time = unix_seconds;
    }

    pub fn id(&self) -> ValidatorId {
        self.id
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.config
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn chain(&self) -> &[Arc<Block>] {
        &self.chain
    }

    /// Height currently being decided.
    pub fn height(&self) -> u64 {
        self.ledger.height() + 1
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn locked_hash(&self) -> Option<Hash32> {
        self.prepared.as_ref().map(|c| c.block_hash())
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    /// Round in which each finalized height was decided.
    pub fn decided_rounds(&self) -> &[u32] {
        &self.decided_rounds
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn stopped(&self) -> bool {
        self.target_height.is_some_and(|t| self.ledger.height() >= t)
    }

    pub fn submit(&mut self, tx: Transaction) {
        if self.mempool.is_empty() {
            self.deadline = self.now + self.config.timeout(self.round);
        }
        if self.mempool_ids.insert(tx.tx_id()) {
            self.mempool.push(tx);
        }
    }

    pub fn clear_mempool(&mut self) {
        self.mempool.clear();
        self.mempool_ids.clear();
    }

    pub fn is_leader(&self) -> bool {
        self.config.leader(self.height(), self.round) == self.id
    }

    fn timer_active(&self) -> bool {
        self.config.propose_empty
            || !self.mempool.is_empty()
            || self.round > 0
            || !self.rounds.is_empty()
            || !self.future.is_empty()
    }

    /// Proposes a block for the current `(height, round)` if this node leads
    /// it. In rounds above zero a round-change quorum must already be held.
    pub fn propose(&mut self, now: u64) -> Result<Output, ConsensusError> {
        self.now = now;
        if self.stopped() {
            return Err(ConsensusError::Stopped);
        }
        if !self.is_leader() {
            return Err(ConsensusError::NotLeader {
                validator: self.id,
                height: self.height(),
                round: self.round,
            });
        }
        let mut out = Output::default();
        self.propose_round(self.round, &mut out);
        self.drain(&mut out);
        Ok(out)
    }

    pub fn on_tick(&mut self, now: u64) -> Output {
        self.now = now;
        let mut out = Output::default();
        if self.stopped() {
            return out;
        }
        if !self.timer_active() {
            self.deadline = now + self.config.timeout(self.round);
            return out;
        }
        let wants_block = self.config.propose_empty || !self.mempool.is_empty();
        if self.round == 0 && self.is_leader() && !self.log(0).proposed && wants_block {
            self.propose_round(0, &mut out);
        } else if now >= self.deadline {
            let next = self.round + 1;
            self.move_to_round(next, &mut out);
        }
        self.drain(&mut out);
        out
    }

    pub fn handle_message(&mut self, msg: ConsensusMessage, now: u64) -> Output {
        self.now = now;
        let mut out = Output::default();
        self.local.push_back((msg, false));
        self.drain(&mut out);
        out
    }

    fn drain(&mut self, out: &mut Output) {
        while let Some((msg, trusted)) = self.local.pop_front() {
            self.dispatch(msg, trusted, out);
        }
    }

    fn log(&mut self, round: u32) -> &mut RoundLog {
        self.rounds.entry(round).or_default()
    }

    fn emit(&mut self, msg: ConsensusMessage, out: &mut Output) {
        out.messages.push(Outbound {
            to: None,
            message: msg.clone(),
        });
        self.local.push_back((msg, true));
    }

    fn sign(
        &self,
        kind: MessageKind,
        round: u32,
        block_hash: Option<Hash32>,
        block: Option<Arc<Block>>,
        prepared: Option<Arc<PreparedCertificate>>,
        justification: Vec<ConsensusMessage>,
    ) -> ConsensusMessage {
        ConsensusMessage::signed(
            kind,
            self.height(),
            round,
            block_hash,
            block,
            prepared,
            justification,
            self.id,
            &self.key,
        )
    }

    fn dispatch(&mut self, msg: ConsensusMessage, trusted: bool, out: &mut Output) {
        if !trusted && !msg.well_formed(&self.config) {
            self.stats.bad_signature += 1;
            return;
        }
        let height = self.height();
        if msg.height < height {
            if msg.kind == MessageKind::RoundChange {
                if self.commit_certs.contains_key(&msg.height) {
                    let upto = msg.height.saturating_add(SYNC_BATCH);
                    for cert in self.commit_certs.range(msg.height..upto).map(|(_, c)| c) {
                        for m in cert {
                            out.messages.push(Outbound {
                                to: Some(msg.sender),
                                message: m.clone(),
                            });
                        }
                    }
                    return;
                }
            }
            self.stats.stale += 1;
            return;
        }
        if self.stopped() {
            return;
        }
        if msg.height > height {
            if self.future.len() >= FUTURE_BUFFER_LIMIT {
                self.future.pop_front();
            }
            self.future.push_back(msg);
            self.stats.buffered += 1;
            return;
        }
        match msg.kind {
            MessageKind::PrePrepare => self.on_preprepare(msg, out),
            MessageKind::Prepare => self.on_prepare(msg, out),
            MessageKind::Commit => self.on_commit(msg, out),
            MessageKind::RoundChange => self.on_round_change(msg, out),
        }
    }

    /// Validates `block` against the ledger once and caches the result.
    fn ensure_candidate(&mut self, block: &Arc<Block>) -> bool {
        let hash = block.hash();
        if self.candidates.contains_key(&hash) {
            return true;
        }
        if self.invalid.contains(&hash) || block.height != self.height() {
            return false;
        }
        match self.ledger.after_block(block) {
            Ok((next, outcome)) => {
                self.candidates.insert(
                    hash,
                    Candidate {
                        block: block.clone(),
                        next,
                        outcome,
                    },
                );
                true
            }
            Err(_) => {
                self.invalid.insert(hash);
                false
            }
        }
    }

    fn valid_certificate(&self, cert: &PreparedCertificate, below_round: u32, height: u64) -> bool {
        if cert.round >= below_round || cert.block.height != height {
            return false;
        }
        let hash = cert.block_hash();
        let senders: BTreeSet<ValidatorId> = cert
            .prepares
            .iter()
            .filter(|p| {
                p.kind == MessageKind::Prepare
                    && p.height == height
                    && p.round == cert.round
                    && p.block_hash == Some(hash)
                    && p.verify_signature(&self.config)
            })
            .map(|p| p.sender)
            .collect();
        senders.len() >= self.config.quorum()
    }

    /// For a round above zero: a quorum of valid round changes for exactly
    /// this `(height, round)`. Returns the highest-round certificate they
    /// carry.
    fn justification_best(&self, msg: &ConsensusMessage) -> Result<Option<Arc<PreparedCertificate>>, ()> {
        let mut senders = BTreeSet::new();
        let mut best: Option<Arc<PreparedCertificate>> = None;
        for rc in msg.justification.iter() {
            let ok = rc.kind == MessageKind::RoundChange
                && rc.height == msg.height
                && rc.round == msg.round
                && rc.verify_signature(&self.config)
                && rc
                    .prepared
                    .as_ref()
                    .map_or(true, |c| self.valid_certificate(c, rc.round, rc.height));
            if !ok || !senders.insert(rc.sender) {
                continue;
            }
            if let Some(cert) = &rc.prepared {
                if best.as_ref().map_or(true, |b| cert.round > b.round) {
                    best = Some(cert.clone());
                }
            }
        }
        if senders.len() >= self.config.quorum() {
            Ok(best)
        } else {
            Err(())
        }
    }

    fn on_preprepare(&mut self, msg: ConsensusMessage, out: &mut Output) {
        let round = msg.round;
        let hash = msg.block_hash.expect("well-formed pre-prepare");
        let block = msg.block.clone().expect("well-formed pre-prepare");
        if msg.sender != self.config.leader(msg.height, round) {
            self.stats.invalid += 1;
            return;
        }
        if round < self.round {
            self.stats.stale += 1;
            return;
        }
        if let Some(accepted) = self.log(round).accepted {
            if accepted == hash {
                self.stats.duplicate += 1;
            } else {
                self.stats.equivocation_seen += 1;
            }
            return;
        }
        let best = if round > 0 {
            match self.justification_best(&msg) {
                Ok(best) => best,
                Err(()) => {
                    self.stats.invalid += 1;
                    return;
                }
            }
        } else {
            None
        };
        if best.as_ref().is_some_and(|c| c.block_hash() != hash) {
            self.stats.invalid += 1;
            return;
        }
        if !self.ensure_candidate(&block) {
            self.stats.invalid += 1;
            return;
        }
        if round > self.round {
            self.move_to_round(round, out);
        }
        let log = self.log(round);
        log.accepted = Some(hash);
        if !log.sent_prepare {
            log.sent_prepare = true;
            let prepare = self.sign(MessageKind::Prepare, round, Some(hash), None, None, Vec::new());
            self.emit(prepare, out);
        }
        self.check_prepared(round, out);
    }

    fn on_prepare(&mut self, msg: ConsensusMessage, out: &mut Output) {
        let round = msg.round;
        let log = self.log(round);
        if let Some(prev) = log.prepares.get(&msg.sender) {
            if prev.block_hash == msg.block_hash {
                self.stats.duplicate += 1;
            } else {
                self.stats.equivocation_seen += 1;
            }
            return;
        }
        log.prepares.insert(msg.sender, msg);
        self.check_prepared(round, out);
    }

    fn check_prepared(&mut self, round: u32, out: &mut Output) {
        if round != self.round {
            return;
        }
        let quorum = self.config.quorum();
        let log = self.log(round);
        let Some(hash) = log.accepted else {
            return;
        };
        if log.sent_commit {
            return;
        }
        let prepares: Vec<ConsensusMessage> = log
            .prepares
            .values()
            .filter(|p| p.block_hash == Some(hash))
            .take(quorum)
            .cloned()
            .collect();
        if prepares.len() < quorum {
            return;
        }
        log.sent_commit = true;
        let block = self.candidates[&hash].block.clone();
        self.prepared = Some(Arc::new(PreparedCertificate {
            round,
            block: block.clone(),
            prepares,
        }));
        let commit = self.sign(MessageKind::Commit, round, Some(hash), Some(block), None, Vec::new());
        self.emit(commit, out);
    }

    fn on_commit(&mut self, msg: ConsensusMessage, out: &mut Output) {
        let round = msg.round;
        let hash = msg.block_hash.expect("well-formed commit");
        if let Some(block) = &msg.block {
            self.ensure_candidate(block);
        }
        let log = self.log(round);
        if let Some(prev) = log.commits.get(&msg.sender) {
            if prev.block_hash == msg.block_hash {
                self.stats.duplicate += 1;
            } else {
                self.stats.equivocation_seen += 1;
            }
            return;
        }
        log.commits.insert(msg.sender, msg);
        let quorum = self.config.quorum();
        let commits: Vec<ConsensusMessage> = self.rounds[&round]
            .commits
            .values()
            .filter(|c| c.block_hash == Some(hash))
            .cloned()
            .collect();
        if commits.len() >= quorum && self.candidates.contains_key(&hash) {
            self.finalize(hash, round, commits, out);
        }
    }

    fn on_round_change(&mut self, msg: ConsensusMessage, out: &mut Output) {
        if let Some(cert) = &msg.prepared {
            if !self.valid_certificate(cert, msg.round, msg.height) {
                self.stats.invalid += 1;
                return;
            }
        }
        let round = msg.round;
        let log = self.log(round);
        if log.round_changes.contains_key(&msg.sender) {
            self.stats.duplicate += 1;
            return;
        }
        log.round_changes.insert(msg.sender, msg);

        // f + 1 validators already ahead: at least one honest one timed out.
        if round > self.round {
            let mut ahead: BTreeMap<ValidatorId, u32> = BTreeMap::new();
            for (&r, log) in self.rounds.range(self.round + 1..) {
                for &sender in log.round_changes.keys() {
                    ahead.insert(sender, r);
                }
            }
            let f = self.config.f();
            if ahead.len() > f {
                let mut rounds: Vec<u32> = ahead.into_values().collect();
                rounds.sort_unstable_by(|a, b| b.cmp(a));
                self.move_to_round(rounds[f], out);
            }
        }
        self.try_lead_round(round, out);
    }

    fn try_lead_round(&mut self, round: u32, out: &mut Output) {
        let quorum = self.config.quorum();
        if round < self.round || self.log(round).round_changes.len() < quorum {
            return;
        }
        if round > self.round {
            self.move_to_round(round, out);
        }
        if round > 0 && self.config.leader(self.height(), round) == self.id && !self.log(round).proposed {
            self.propose_round(round, out);
        }
    }

    fn move_to_round(&mut self, round: u32, out: &mut Output) {
        if round <= self.round {
            return;
        }
        self.round = round;
        self.deadline = self.now + self.config.timeout(round);
        if !self.log(round).sent_round_change {
            self.log(round).sent_round_change = true;
            let rc = self.sign(MessageKind::RoundChange, round, None, None, self.prepared.clone(), Vec::new());
            self.emit(rc, out);
        }
        // Pre-prepares and prepares for this round may have arrived early.
        self.check_prepared(round, out);
    }

    fn propose_round(&mut self, round: u32, out: &mut Output) {
        let log = self.log(round);
        if log.proposed {
            return;
        }
        log.proposed = true;
        let (block, justification) = if round == 0 {
            (self.fresh_block(), Vec::new())
        } else {
            let justification: Vec<ConsensusMessage> = self.rounds[&round].round_changes.values().cloned().collect();
            let best = justification
                .iter()
                .filter_map(|rc| rc.prepared.clone())
                .fold(None::<Arc<PreparedCertificate>>, |best, c| match best {
                    Some(b) if b.round >= c.round => Some(b),
                    _ => Some(c),
                });
            let block = match best {
                Some(cert) => cert.block.clone(),
                None => self.fresh_block(),
            };
            (block, justification)
        };
        let hash = block.hash();
        let msg = self.sign(MessageKind::PrePrepare, round, Some(hash), Some(block), None, justification);
        self.emit(msg, out);
    }

    fn fresh_block(&self) -> Arc<Block> {
        let take = self.mempool.len().min(self.config.max_block_txs);
        let timestamp = self.wall_time.unwrap_or(self.now as i64);
        Arc::new(self.ledger.build_block(&self.mempool[..take], self.id, timestamp))
    }

    fn finalize(&mut self, hash: Hash32, round: u32, commits: Vec<ConsensusMessage>, out: &mut Output) {
        let candidate = self.candidates.remove(&hash).expect("finalize needs a validated body");
        let height = self.height();
        self.ledger = candidate.next;
        self.chain.push(candidate.block.clone());
        self.commit_certs.insert(height, commits);
        self.decided_rounds.push(round);

        let in_block: BTreeSet<Hash32> = candidate
            .block
            .transactions
            .iter()
            .chain(candidate.block.rejected.iter())
            .map(Transaction::tx_id)
            .collect();
        self.mempool.retain(|tx| !in_block.contains(&tx.tx_id()));
        self.mempool_ids.retain(|id| !in_block.contains(id));

        out.finalized.push(Finalized {
            block: candidate.block,
            outcome: candidate.outcome,
            round,
        });

        self.round = 0;
        self.prepared = None;
        self.rounds.clear();
        self.candidates.clear();
        self.invalid.clear();
        self.deadline = self.now + self.config.timeout(0);
        // Stale queued work belongs to the decided height.
        self.local.retain(|(m, _)| m.height > height);

        if self.stopped() {
            self.future.clear();
            return;
        }
        let next = self.height();
        let (now_due, later): (Vec<_>, Vec<_>) = self.future.drain(..).partition(|m| m.height == next);
        self.future = later.into_iter().filter(|m| m.height > next).collect();
        for m in now_due {
            self.local.push_back((m, true));
        }
    }
}
