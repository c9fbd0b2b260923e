use std::sync::Arc;

use super::{ConsensusConfig, ValidatorId};
use crate::crypto::{sign_message, verify_signature, Algorithm, Hash32, KeyPair, SIGNATURE_LEN};
use crate::ledger::Block;

const DOMAIN: &[u8] = b"bacip-ibft-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    PrePrepare,
    Prepare,
    Commit,
    RoundChange,
}

impl MessageKind {
    fn tag(self) -> u8 {
        match self {
            MessageKind::PrePrepare => 0,
            MessageKind::Prepare => 1,
            MessageKind::Commit => 2,
            MessageKind::RoundChange => 3,
        }
    }
}

/// Proof that a block gathered a prepare quorum in `round`: the prepare
/// messages themselves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedCertificate {
    pub round: u32,
    pub block: Arc<Block>,
    pub prepares: Vec<ConsensusMessage>,
}

impl PreparedCertificate {
    pub fn block_hash(&self) -> Hash32 {
        self.block.hash()
    }
}

/// A signed consensus message.
///
/// * `PrePrepare` carries the proposed block; in rounds above zero it also
///   carries a quorum of round-change messages as `justification`.
/// * `Prepare` names the block hash only.
/// * `Commit` names the hash and carries the block body, so that a node that
///   missed the proposal can still apply a committed block.
/// * `RoundChange` names the round being moved to and carries the sender's
///   prepared certificate, if any.
///
/// The signature covers kind, height, round, block hash and the round and
/// hash of the carried certificate. Bodies, certificates and justifications
/// are bound by hash or are themselves signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusMessage {
    pub kind: MessageKind,
    pub height: u64,
    pub round: u32,
    pub block_hash: Option<Hash32>,
    pub block: Option<Arc<Block>>,
    pub prepared: Option<Arc<PreparedCertificate>>,
    pub justification: Arc<Vec<ConsensusMessage>>,
    pub sender: ValidatorId,
    pub signature: [u8; SIGNATURE_LEN],
}

impl ConsensusMessage {
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DOMAIN.len() + 1 + 8 + 4 + 33 + 37);
        out.extend_from_slice(DOMAIN);
        out.push(self.kind.tag());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        match &self.block_hash {
            Some(h) => {
                out.push(1);
                out.extend_from_slice(h.as_bytes());
            }
            None => out.push(0),
        }
        match &self.prepared {
            Some(cert) => {
                out.push(1);
                out.extend_from_slice(&cert.round.to_be_bytes());
                out.extend_from_slice(cert.block_hash().as_bytes());
            }
            None => out.push(0),
        }
        out
    }

    /// Builds and signs a message. `key` must be an Ed25519 key.
    #[allow(clippy::too_many_arguments)]
    pub fn signed(
        kind: MessageKind,
        height: u64,
        round: u32,
        block_hash: Option<Hash32>,
        block: Option<Arc<Block>>,
        prepared: Option<Arc<PreparedCertificate>>,
        justification: Vec<ConsensusMessage>,
        sender: ValidatorId,
        key: &KeyPair,
    ) -> Self {
        let mut msg = ConsensusMessage {
            kind,
            height,
            round,
            block_hash,
            block,
            prepared,
            justification: Arc::new(justification),
            sender,
            signature: [0u8; SIGNATURE_LEN],
        };
        msg.signature = sign_message(&msg.signing_payload(), key);
        msg
    }

    pub fn resign(&mut self, key: &KeyPair) {
        self.signature = sign_message(&self.signing_payload(), key);
    }

    pub fn verify_signature(&self, config: &ConsensusConfig) -> bool {
        let Some(pk) = config.public_key(self.sender) else {
            return false;
        };
        verify_signature(Algorithm::Ed25519, &self.signing_payload(), &self.signature, pk)
    }

    /// Signature plus the shape rules for the message kind: bodies must
    /// hash to the named block.
    pub fn well_formed(&self, config: &ConsensusConfig) -> bool {
        let body_matches = match (&self.block, &self.block_hash) {
            (Some(b), Some(h)) => b.hash() == *h,
            (Some(_), None) => false,
            (None, _) => true,
        };
        let shape = match self.kind {
            MessageKind::PrePrepare => self.block.is_some() && self.block_hash.is_some(),
            MessageKind::Prepare | MessageKind::Commit => self.block_hash.is_some(),
            MessageKind::RoundChange => self.block_hash.is_none() && self.block.is_none(),
        };
        body_matches && shape && self.verify_signature(config)
    }
}
