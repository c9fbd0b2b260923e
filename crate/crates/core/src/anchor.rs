//! Public anchor log and inclusion proofs.
//!
//! The private ledger keeps full transactions. After each finalized block a
//! [`PublicAnchor`] holding only hashes is appended to a hash-linked log. An
//! [`InclusionProof`] lets anyone holding a credential check its status
//! against an anchor with no access to the ledger.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::canonical_bytes_of;
use crate::credential::CredentialId;
use crate::crypto::Hash32;
use crate::ledger::{Block, LedgerState};
use crate::merkle::{fold_path, PathStep};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PublicAnchor {
    pub anchor_index: u64,
    pub private_height: u64,
    pub private_block_hash: Hash32,
    pub state_root: Hash32,
    /// Hash of the previous anchor; zero for the first.
    pub prev_anchor_hash: Hash32,
}

impl PublicAnchor {
    pub fn hash(&self) -> Hash32 {
        Hash32::of(&canonical_bytes_of(self))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InclusionProof {
    pub credential_id: CredentialId,
    pub leaf_hash: Hash32,
    pub path: Vec<PathStep>,
    pub anchor_index: u64,
}

/// The status a holder claims for a credential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClaimedStatus {
    pub doc_hash: Hash32,
    pub revoked: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum AnchorError {
    #[error("height {height} is not above the last anchored height {last}")]
    OutOfOrder { height: u64, last: u64 },
    #[error("state at height {state_height} does not match block {block_height}")]
    StateMismatch { block_height: u64, state_height: u64 },
    #[error("unknown credential {0}")]
    UnknownCredential(String),
    #[error("no anchor has been published yet")]
    NoAnchor,
    #[error("anchor log broken at index {0}")]
    Corrupt(u64),
    #[error("anchor log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("anchor log io: {0}")]
    Io(#[from] std::io::Error),
}

/// Checks indices and hash links of a whole log. Returns the index of the
/// first anchor that does not follow from its predecessor.
pub fn verify_log(anchors: &[PublicAnchor]) -> Result<(), u64> {
    let mut prev = Hash32::ZERO;
    let mut last_height = 0u64;
    for (i, a) in anchors.iter().enumerate() {
        let i = i as u64;
        if a.anchor_index != i || a.prev_anchor_hash != prev || (i > 0 && a.private_height <= last_height) {
            return Err(i);
        }
        prev = a.hash();
        last_height = a.private_height;
    }
    Ok(())
}

/// Pure third-party check: the claimed status hashes to the proof's leaf
/// and the path folds the leaf to the anchor's root.
pub fn verify_with_anchor(proof: &InclusionProof, claimed: ClaimedStatus, anchor: &PublicAnchor) -> bool {
    let leaf = LedgerState::leaf_hash(&proof.credential_id, &claimed.doc_hash, claimed.revoked);
    leaf == proof.leaf_hash && proof.anchor_index == anchor.anchor_index && fold_path(leaf, &proof.path) == anchor.state_root
}

/// Append-only, single-writer anchor log, optionally backed by a JSON-lines
/// file.
#[derive(Debug, Default)]
pub struct AnchorLog {
    anchors: Vec<PublicAnchor>,
    path: Option<PathBuf>,
}

impl AnchorLog {
    pub fn in_memory() -> Self {
        AnchorLog::default()
    }

    /// Opens or creates the log at `path`, rejecting a broken chain.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnchorError> {
        let path = path.as_ref().to_path_buf();
        let mut anchors = Vec::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let anchor = serde_json::from_str(&line).map_err(|e| AnchorError::Parse {
                    line: n + 1,
                    message: e.to_string(),
                })?;
                anchors.push(anchor);
            }
            verify_log(&anchors).map_err(AnchorError::Corrupt)?;
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            File::create(&path)?;
        }
        Ok(AnchorLog {
            anchors,
            path: Some(path),
        })
    }

    pub fn anchors(&self) -> &[PublicAnchor] {
        &self.anchors
    }

    pub fn get(&self, index: u64) -> Option<&PublicAnchor> {
        self.anchors.get(usize::try_from(index).ok()?)
    }

    pub fn latest(&self) -> Option<&PublicAnchor> {
        self.anchors.last()
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Anchors finalized `block`. `state` must be the state right after it.
    pub fn anchor_block(&mut self, block: &Block, state: &LedgerState) -> Result<PublicAnchor, AnchorError> {
        if let Some(last) = self.latest() {
            if block.height <= last.private_height {
                return Err(AnchorError::OutOfOrder {
                    height: block.height,
                    last: last.private_height,
                });
            }
        }
        let state_root = state.state_commitment();
        if state.height() != block.height || state_root != block.state_root {
            return Err(AnchorError::StateMismatch {
                block_height: block.height,
                state_height: state.height(),
            });
        }
        let anchor = PublicAnchor {
            anchor_index: self.anchors.len() as u64,
            private_height: block.height,
            private_block_hash: block.hash(),
            state_root,
            prev_anchor_hash: self.latest().map_or(Hash32::ZERO, PublicAnchor::hash),
        };
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new().append(true).open(path)?;
            let mut line = canonical_bytes_of(&anchor);
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.anchors.push(anchor.clone());
        Ok(anchor)
    }

    /// Proof of `id`'s current leaf against the latest anchor. `state` must
    /// be the state that anchor commits to.
    pub fn build_inclusion_proof(&self, state: &LedgerState, id: &CredentialId) -> Result<InclusionProof, AnchorError> {
        let anchor = self.latest().ok_or(AnchorError::NoAnchor)?;
        build_inclusion_proof(state, id, anchor.anchor_index)
    }
}

/// Proof of `id`'s current leaf, labelled with `anchor_index`.
pub fn build_inclusion_proof(
    state: &LedgerState,
    id: &CredentialId,
    anchor_index: u64,
) -> Result<InclusionProof, AnchorError> {
    let (leaf_hash, path) = state
        .credential_path(id)
        .ok_or_else(|| AnchorError::UnknownCredential(id.to_string()))?;
    Ok(InclusionProof {
        credential_id: id.clone(),
        leaf_hash,
        path,
        anchor_index,
    })
}
