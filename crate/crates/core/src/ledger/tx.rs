use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::RevocationKey;
use crate::canonical::canonical_bytes_of;
use crate::credential::{CredentialDocument, Did, PointerId};
use crate::crypto::{sign, Hash32, KeyPair, Proof};
use crate::store::StoredRef;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TxPayload {
    IssueCredential {
        document: CredentialDocument,
        stored: StoredRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pointer: Option<PointerId>,
    },
    RevokeCredential {
        key: RevocationKey,
    },
    GiveConsent {
        subject: Did,
    },
    WithdrawConsent {
        subject: Did,
    },
    DeleteData {
        subject: Did,
    },
    SetPermissions {
        user: Did,
        permissions: u32,
    },
}

impl TxPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            TxPayload::IssueCredential { .. } => "IssueCredential",
            TxPayload::RevokeCredential { .. } => "RevokeCredential",
            TxPayload::GiveConsent { .. } => "GiveConsent",
            TxPayload::WithdrawConsent { .. } => "WithdrawConsent",
            TxPayload::DeleteData { .. } => "DeleteData",
            TxPayload::SetPermissions { .. } => "SetPermissions",
        }
    }
}

/// A signed ledger transaction.
///
/// The signature covers the canonical JSON of every other member; the
/// transaction id is the SHA-256 of the canonical JSON including it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Did,
    /// Unix seconds.
    pub timestamp: i64,
    /// Distinguishes otherwise identical transactions from one sender.
    pub nonce: u64,
    pub payload: TxPayload,
    pub signature: Proof,
}

#[derive(Serialize)]
struct Unsigned<'a> {
    sender: &'a Did,
    timestamp: i64,
    nonce: u64,
    payload: &'a TxPayload,
}

impl Transaction {
    pub fn signing_bytes_for(sender: &Did, timestamp: i64, nonce: u64, payload: &TxPayload) -> Vec<u8> {
        canonical_bytes_of(&Unsigned {
            sender,
            timestamp,
            nonce,
            payload,
        })
    }

    pub fn signed(sender: Did, timestamp: i64, nonce: u64, payload: TxPayload, key: &KeyPair) -> Self {
        let bytes = Self::signing_bytes_for(&sender, timestamp, nonce, &payload);
        let created = DateTime::from_timestamp(timestamp, 0).unwrap_or_default();
        Transaction {
            signature: sign(&bytes, key, created),
            sender,
            timestamp,
            nonce,
            payload,
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        Self::signing_bytes_for(&self.sender, self.timestamp, self.nonce, &self.payload)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_bytes_of(self)
    }

    pub fn tx_id(&self) -> Hash32 {
        Hash32::of(&self.canonical_bytes())
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        serde_json::from_value(value.clone())
    }
}
