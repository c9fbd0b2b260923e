//! Signatures, authenticated encryption and hashing.

pub mod hash;
pub mod keystore;
pub mod seal;
pub mod sign;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use hash::{content_hash, ContentAddress, Hash32};
pub use keystore::{KeyStore, KeystoreError};
pub use seal::{decrypt_payload, encrypt_payload, SealedPayload, KEY_LEN, NONCE_LEN, TAG_LEN};
#[cfg(feature = "nonce-injection")]
pub use seal::encrypt_payload_with_nonce;
pub use sign::{
    generate_keypair, sign, sign_message, verify, verify_signature, KeyPair, Proof, ProofType,
    SIGNATURE_LEN,
};

/// Signature algorithms accepted for credentials, transactions and tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// ECDSA over P-256 with SHA-256, raw `r || s` signatures.
    #[serde(rename = "ES256")]
    Es256,
    #[serde(rename = "Ed25519")]
    Ed25519,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Es256 => "ES256",
            Algorithm::Ed25519 => "Ed25519",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported algorithm `{0}` (expected es256 or ed25519)")]
pub struct UnsupportedAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnsupportedAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "es256" => Ok(Algorithm::Es256),
            "ed25519" => Ok(Algorithm::Ed25519),
            _ => Err(UnsupportedAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("key must be exactly {expected} bytes, got {actual}")]
    BadKeyLength { expected: usize, actual: usize },
    #[error("authentication failed")]
    AuthFailure,
    #[error("secret is not a valid {0} private key")]
    InvalidSecret(Algorithm),
    #[error("sealed payload is truncated")]
    Truncated,
}
