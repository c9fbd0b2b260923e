use std::fmt;

use serde::{Deserialize, Serialize};

use super::Transaction;
use crate::canonical::canonical_bytes_of;
use crate::crypto::Hash32;

/// Index of a validator in the consensus configuration.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Debug for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A batch of transactions agreed by consensus.
///
/// `transactions` are applied in order and each must be valid against the
/// state left by its predecessors. `rejected` lists submitted transactions
/// that are invalid against the state after all of `transactions`; they
/// change nothing but the audit trail.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub height: u64,
    pub parent_hash: Hash32,
    pub timestamp: i64,
    pub proposer: ValidatorId,
    pub transactions: Vec<Transaction>,
    #[serde(default)]
    pub rejected: Vec<Transaction>,
    pub state_root: Hash32,
}

impl Block {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_bytes_of(self)
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of(&self.canonical_bytes())
    }

    pub fn tx_count(&self) -> usize {
        self.transactions.len() + self.rejected.len()
    }
}
