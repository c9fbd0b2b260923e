use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use super::node::{Finalized, IbftNode, Output};
use super::sim::{public_keys, validator_keys};
use super::{quorum_size, ConsensusConfig, ValidatorId};
use crate::crypto::Hash32;
use crate::ledger::{LedgerState, Transaction};

const TICK_BUDGET: u64 = 10_000;
const CATCH_UP_BUDGET: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("consensus unavailable: {reason}")]
pub struct ConsensusUnavailable {
    pub reason: String,
}

/// An all-honest validator set run in-process with instant, ordered
/// delivery. Leaders only propose when they hold transactions.
///
/// Validator keys are derived from `seed` and never leave the process, so
/// this offers fault tolerance against crashed validators, not against
/// Byzantine ones.
pub struct InProcessCluster {
    nodes: Vec<IbftNode>,
    online: Vec<bool>,
    tick: u64,
}

impl InProcessCluster {
    pub fn new(genesis: LedgerState, n: usize, seed: u64) -> Self {
        let keys = validator_keys(n, seed);
        let mut config = ConsensusConfig::new(public_keys(&keys), 4);
        config.propose_empty = false;
        let config = Arc::new(config);
        let nodes = keys
            .into_iter()
            .enumerate()
            .map(|(i, key)| IbftNode::new(ValidatorId(i as u32), config.clone(), key, genesis.clone()))
            .collect();
        InProcessCluster {
            nodes,
            online: vec![true; n],
            tick: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn set_online(&mut self, node: usize, online: bool) {
        self.online[node] = online;
    }

    pub fn online_count(&self) -> usize {
        self.online.iter().filter(|&&o| o).count()
    }

    fn observer(&self) -> Option<usize> {
        self.online.iter().position(|&o| o)
    }

    /// Delivers messages until the network is quiet. Returns what each node
    /// finalized, in delivery order.
    fn round_trip(&mut self, start: Vec<(usize, Output)>) -> Vec<(usize, Vec<Finalized>)> {
        let mut queue: VecDeque<(usize, Output)> = start.into();
        let mut finalized = Vec::new();
        while let Some((from, out)) = queue.pop_front() {
            if !out.finalized.is_empty() {
                finalized.push((from, out.finalized));
            }
            for ob in out.messages {
                let targets: Vec<usize> = match ob.to {
                    Some(to) => vec![to.0 as usize],
                    None => (0..self.nodes.len()).filter(|&t| t != from).collect(),
                };
                for to in targets {
                    if self.online[to] {
                        let reply = self.nodes[to].handle_message(ob.message.clone(), self.tick);
                        queue.push_back((to, reply));
                    }
                }
            }
        }
        finalized
    }

    /// Ticks until every online validator holds the observer's height, or
    /// the catch-up budget runs out.
    fn catch_up(&mut self, observer: usize) {
        let target = self.nodes[observer].ledger().height();
        for _ in 0..CATCH_UP_BUDGET {
            let lagging = (0..self.nodes.len()).any(|i| self.online[i] && self.nodes[i].ledger().height() < target);
            if !lagging {
                return;
            }
            let outs: Vec<(usize, Output)> = (0..self.nodes.len())
                .filter(|&i| self.online[i])
                .map(|i| (i, self.nodes[i].on_tick(self.tick)))
                .collect();
            self.round_trip(outs);
            self.tick += 1;
        }
    }

    /// Ledger of the first online validator.
    pub fn ledger(&self) -> &LedgerState {
        self.nodes[self.observer().unwrap_or(0)].ledger()
    }

    pub fn node(&self, index: usize) -> &IbftNode {
        &self.nodes[index]
    }

    /// Orders `txs` into finalized blocks. Returns the blocks finalized
    /// meanwhile, as seen by the first online validator; every submitted
    /// transaction is in one of them, applied or rejected.
    pub fn submit(&mut self, txs: Vec<Transaction>, now_unix: i64) -> Result<Vec<Finalized>, ConsensusUnavailable> {
        let quorum = quorum_size(self.n());
        if self.online_count() < quorum {
            return Err(ConsensusUnavailable {
                reason: format!("{} of {} validators online, {} needed", self.online_count(), self.n(), quorum),
            });
        }
        let observer = self.observer().expect("a quorum is online");
        let mut waiting: BTreeSet<Hash32> = txs.iter().map(Transaction::tx_id).collect();
        for (node, _) in self.nodes.iter_mut().zip(&self.online).filter(|(_, &o)| o) {
            node.set_wall_time(Some(now_unix));
            for tx in &txs {
                node.submit(tx.clone());
            }
        }
        let mut finalized = Vec::new();
        let mut queue: Vec<(usize, Output)> = Vec::new();
        let deadline = self.tick + TICK_BUDGET;
        while !waiting.is_empty() {
            if self.tick >= deadline {
                return Err(ConsensusUnavailable {
                    reason: format!("{} transactions not finalized in time", waiting.len()),
                });
            }
            for i in 0..self.nodes.len() {
                if self.online[i] {
                    let out = self.nodes[i].on_tick(self.tick);
                    queue.push((i, out));
                }
            }
            for (from, out) in self.round_trip(std::mem::take(&mut queue)) {
                if from == observer {
                    for f in out {
                        for tx in f.block.transactions.iter().chain(&f.block.rejected) {
                            waiting.remove(&tx.tx_id());
                        }
                        finalized.push(f);
                    }
                }
            }
            self.tick += 1;
        }
        self.catch_up(observer);
        for node in &mut self.nodes {
            node.set_wall_time(None);
        }
        Ok(finalized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Workload;

    #[test]
    fn single_validator_finalizes_immediately() {
        let mut w = Workload::new(1, 2);
        let state = LedgerState::from_genesis(&w.genesis).unwrap();
        let mut c = InProcessCluster::new(state, 1, 0);
        let txs = w.transactions(5);
        let blocks = c.submit(txs, 1_700_000_000).unwrap();
        let total: usize = blocks.iter().map(|b| b.block.tx_count()).sum();
        assert_eq!(total, 5);
        assert_eq!(blocks[0].block.timestamp, 1_700_000_000);
        assert_eq!(c.ledger().height(), blocks.len() as u64);
    }

    #[test]
    fn four_validators_tolerate_one_crash() {
        let mut w = Workload::new(2, 2);
        let state = LedgerState::from_genesis(&w.genesis).unwrap();
        let mut c = InProcessCluster::new(state, 4, 0);
        c.submit(w.transactions(3), 1).unwrap();
        c.set_online(1, false);
        c.submit(w.transactions(3), 2).unwrap();
        c.set_online(2, false);
        let err = c.submit(w.transactions(1), 3).unwrap_err();
        assert!(err.reason.contains("2 of 4"), "{err}");
        c.set_online(1, true);
        c.set_online(2, true);
        c.submit(w.transactions(2), 4).unwrap();
        let h = c.ledger().height();
        assert_eq!(c.node(1).ledger().height(), h);
        assert_eq!(c.node(1).ledger().state_root(), c.ledger().state_root());
    }
}
