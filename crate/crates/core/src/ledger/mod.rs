//! The replicated credential ledger.
//!
//! [`LedgerState`] is a deterministic state machine. It is mutated only by
//! finalized [`Block`]s applied in height order, and every transaction in a
//! block, accepted or rejected, leaves exactly one [`AuditEvent`]. Off-chain
//! consequences of a transaction (blob erasure, pointer invalidation, key
//! destruction) are returned as [`Effect`]s for the caller to carry out.

mod block;
mod genesis;
mod journal;
mod state;
mod tx;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use block::{Block, ValidatorId};
pub use genesis::{Genesis, GenesisError, Participant, RevocationPolicy};
pub use journal::{replay, Journal, JournalError};
pub use state::{
    BlockError, BlockOutcome, ContractViolation, CredentialRecord, InvalidReason, LedgerState,
    RegisteredKey, TxOutcome, VerificationOutcome,
};
pub use tx::{Transaction, TxPayload};

use crate::credential::{CredentialId, PointerId};
use crate::crypto::{ContentAddress, Hash32};

/// Slot of a credential in the revocation registry: `SHA-256(id)`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RevocationKey(pub Hash32);

impl RevocationKey {
    pub fn of(id: &CredentialId) -> Self {
        RevocationKey(Hash32::of(id.as_str().as_bytes()))
    }
}

impl fmt::Display for RevocationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for RevocationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RevocationKey({})", self.0)
    }
}

/// Role permission flags.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PermissionBits(u32);

impl PermissionBits {
    pub const NONE: PermissionBits = PermissionBits(0);
    pub const ISSUE: PermissionBits = PermissionBits(1 << 0);
    pub const REVOKE: PermissionBits = PermissionBits(1 << 1);
    pub const VERIFY: PermissionBits = PermissionBits(1 << 2);
    pub const ADMIN: PermissionBits = PermissionBits(1 << 3);
    pub const ALL: PermissionBits = PermissionBits(0b1111);

    /// `None` if any bit outside [`PermissionBits::ALL`] is set.
    pub fn from_bits(bits: u32) -> Option<Self> {
        (bits & !Self::ALL.0 == 0).then_some(PermissionBits(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, required: PermissionBits) -> bool {
        self.0 & required.0 == required.0
    }
}

impl std::ops::BitOr for PermissionBits {
    type Output = PermissionBits;

    fn bitor(self, rhs: Self) -> Self {
        PermissionBits(self.0 | rhs.0)
    }
}

impl fmt::Debug for PermissionBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PermissionBits({:#06b})", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventName {
    CredentialIssued,
    CertificateRevoked,
    ConsentGiven,
    ConsentWithdrawn,
    DataDeleted,
    PermissionsSet,
    TxRejected,
}

impl EventName {
    pub const ALL: [EventName; 7] = [
        EventName::CredentialIssued,
        EventName::CertificateRevoked,
        EventName::ConsentGiven,
        EventName::ConsentWithdrawn,
        EventName::DataDeleted,
        EventName::PermissionsSet,
        EventName::TxRejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventName::CredentialIssued => "CredentialIssued",
            EventName::CertificateRevoked => "CertificateRevoked",
            EventName::ConsentGiven => "ConsentGiven",
            EventName::ConsentWithdrawn => "ConsentWithdrawn",
            EventName::DataDeleted => "DataDeleted",
            EventName::PermissionsSet => "PermissionsSet",
            EventName::TxRejected => "TxRejected",
        }
    }
}

impl std::str::FromStr for EventName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown event name `{s}`"))
    }
}

/// One entry of the append-only audit trail.
///
/// `subject` is the credential id for issuance, the revocation key for
/// revocation, the affected DID for consent and permission events and the
/// sender for rejections. `detail` carries the rejection reason code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEvent {
    pub index: u64,
    pub height: u64,
    pub tx_id: Hash32,
    pub event_name: EventName,
    pub subject: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Audit query; unset fields match everything. Height bounds are inclusive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditFilter {
    pub event_name: Option<EventName>,
    pub subject: Option<String>,
    pub from_height: Option<u64>,
    pub to_height: Option<u64>,
}

impl AuditFilter {
    pub fn matches(&self, event: &AuditEvent) -> bool {
        self.event_name.map_or(true, |n| n == event.event_name)
            && self.subject.as_deref().map_or(true, |s| s == event.subject)
            && self.from_height.map_or(true, |h| event.height >= h)
            && self.to_height.map_or(true, |h| event.height <= h)
    }
}

/// Off-chain work requested by a transaction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "camelCase")]
pub enum Effect {
    EraseBlob { address: ContentAddress },
    DestroyKey { address: ContentAddress },
    InvalidatePointer { pointer: PointerId },
}
