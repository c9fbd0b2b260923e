use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::canonical::canonical_bytes_of;
use crate::credential::Did;
use crate::crypto::{Algorithm, Hash32, KeyPair};

/// Who may revoke a credential besides holding the revoke permission.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RevocationPolicy {
    /// Any sender holding the revoke permission.
    #[default]
    AnyRevoker,
    /// Only the credential's issuer, and only with the revoke permission.
    IssuerOnly,
}

/// A registered signing key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Participant {
    pub did: Did,
    pub key_id: String,
    pub algorithm: Algorithm,
    /// Standard base64 of the public key bytes.
    pub public_key: String,
    /// Issuer URI this key may sign credentials for, besides `did`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_uri: Option<String>,
    /// Bearer-token subject alias for `did`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl Participant {
    pub fn from_keypair(did: Did, key: &KeyPair, issuer_uri: Option<String>) -> Self {
        Participant {
            did,
            key_id: key.key_id().to_string(),
            algorithm: key.algorithm(),
            public_key: STANDARD.encode(key.public_key()),
            issuer_uri,
            subject: None,
        }
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }
}

/// Fixed starting point of a ledger: the administrator, the key registry,
/// initial roles and the revocation policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Genesis {
    pub chain_id: String,
    pub admin: Did,
    pub participants: Vec<Participant>,
    #[serde(default)]
    pub roles: BTreeMap<Did, u32>,
    #[serde(default)]
    pub revocation_policy: RevocationPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenesisError {
    #[error("key id `{0}` registered twice")]
    DuplicateKeyId(String),
    #[error("public key of `{0}` is malformed")]
    BadPublicKey(String),
    #[error("subject alias `{0}` registered for two DIDs")]
    DuplicateSubject(String),
    #[error("role of {0} has unknown permission bits")]
    UnknownPermissionBits(Did),
}

impl Genesis {
    pub fn new(chain_id: impl Into<String>, admin: Did) -> Self {
        Genesis {
            chain_id: chain_id.into(),
            admin,
            participants: Vec::new(),
            roles: BTreeMap::new(),
            revocation_policy: RevocationPolicy::default(),
        }
    }

    /// Parent hash of block 1.
    pub fn hash(&self) -> Hash32 {
        Hash32::of(&canonical_bytes_of(self))
    }
}

pub(super) fn decode_public_key(p: &Participant) -> Result<Vec<u8>, GenesisError> {
    let bytes = STANDARD
        .decode(p.public_key.as_bytes())
        .map_err(|_| GenesisError::BadPublicKey(p.key_id.clone()))?;
    let expected = match p.algorithm {
        Algorithm::Ed25519 => 32,
        Algorithm::Es256 => 65,
    };
    if bytes.len() != expected {
        return Err(GenesisError::BadPublicKey(p.key_id.clone()));
    }
    Ok(bytes)
}
