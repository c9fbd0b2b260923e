//! IBFT-style Byzantine fault tolerant consensus.
//!
//! Each validator runs an [`IbftNode`]: a deterministic automaton that only
//! reacts to messages and logical clock ticks. A height is decided in three
//! phases (pre-prepare, prepare, commit); a round that fails to decide in
//! time is abandoned through round-change messages that carry the sender's
//! prepared certificate, so a block that may have been committed is always
//! re-proposed.
//!
//! [`run_simulation`] drives a set of nodes over a seeded, simulated network
//! with optional Byzantine behaviour. [`InProcessCluster`] runs an all-honest
//! validator set with instant delivery, for nodes that need a finalized
//! block now.

mod cluster;
mod message;
mod node;
mod sim;

pub use cluster::{ConsensusUnavailable, InProcessCluster};
pub use message::{ConsensusMessage, MessageKind, PreparedCertificate};
pub use node::{Finalized, IbftNode, NodeStats, Outbound, Output};
pub use sim::{
    run_simulation, Behavior, ByzantineSpec, DelayModel, EdgeDelay, NodeReport, Scenario,
    ScenarioError, SimReport,
};

pub use crate::ledger::ValidatorId;

/// Largest `f` with `n >= 3f + 1`.
pub fn max_faulty(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

/// Smallest vote count such that any two quorums of `n` validators share at
/// least `f + 1` members, so at least one honest one. This is `2f + 1`
/// whenever `n = 3f + 1`.
pub fn quorum_size(n: usize) -> usize {
    assert!(n >= 1, "a validator set is never empty");
    (n + max_faulty(n) + 2) / 2
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("validator {validator} is not the leader of height {height} round {round}")]
    NotLeader {
        validator: ValidatorId,
        height: u64,
        round: u32,
    },
    #[error("validator has reached its target height")]
    Stopped,
}

/// The validator set and timing parameters shared by every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusConfig {
    /// Ed25519 public keys, indexed by [`ValidatorId`].
    pub validators: Vec<[u8; 32]>,
    /// Ticks a node waits in round 0 before asking for a round change. Round
    /// `r` waits `(r + 1)` times as long.
    pub round_timeout: u64,
    /// Leaders propose even with an empty mempool.
    pub propose_empty: bool,
    pub max_block_txs: usize,
}

impl ConsensusConfig {
    pub fn new(validators: Vec<[u8; 32]>, round_timeout: u64) -> Self {
        assert!(!validators.is_empty(), "a validator set is never empty");
        ConsensusConfig {
            validators,
            round_timeout,
            propose_empty: true,
            max_block_txs: 256,
        }
    }

    pub fn n(&self) -> usize {
        self.validators.len()
    }

    pub fn f(&self) -> usize {
        max_faulty(self.n())
    }

    pub fn quorum(&self) -> usize {
        quorum_size(self.n())
    }

    /// Leader of `(height, round)`: `(height + round) mod n`.
    pub fn leader(&self, height: u64, round: u32) -> ValidatorId {
        ValidatorId(((height + round as u64) % self.n() as u64) as u32)
    }

    pub fn timeout(&self, round: u32) -> u64 {
        self.round_timeout.saturating_mul(round as u64 + 1)
    }

    pub fn public_key(&self, id: ValidatorId) -> Option<&[u8; 32]> {
        self.validators.get(id.0 as usize)
    }
}
