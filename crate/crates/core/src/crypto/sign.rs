//! Key generation, signing and verification for ES256 and Ed25519.
//!
//! Both algorithms produce 64-byte signatures: Ed25519 natively, ES256 as the
//! raw `r || s` concatenation of two 32-byte big-endian scalars (not DER).
//! ES256 nonces are derived deterministically (RFC 6979), so signing the same
//! message with the same key always yields the same bytes.

use std::fmt;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use chrono::{DateTime, SecondsFormat, Utc};
use ed25519_dalek::Signer as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use zeroize::Zeroizing;

use super::{Algorithm, CryptoError};

pub const SIGNATURE_LEN: usize = 64;

/// A signing key with its public half and key identifier.
#[derive(Clone)]
pub struct KeyPair {
    algorithm: Algorithm,
    secret: Zeroizing<[u8; 32]>,
    public_key: Vec<u8>,
    key_id: String,
}

impl KeyPair {
    /// Rebuilds a key pair from its 32-byte secret (Ed25519 seed or P-256 scalar).
    pub fn from_secret(
        algorithm: Algorithm,
        secret: [u8; 32],
        key_id: impl Into<String>,
    ) -> Result<Self, CryptoError> {
        let public_key = match algorithm {
            Algorithm::Ed25519 => ed25519_dalek::SigningKey::from_bytes(&secret)
                .verifying_key()
                .to_bytes()
                .to_vec(),
            Algorithm::Es256 => {
                let sk = p256::ecdsa::SigningKey::from_bytes(&secret.into())
                    .map_err(|_| CryptoError::InvalidSecret(algorithm))?;
                sk.verifying_key()
                    .to_encoded_point(false)
                    .as_bytes()
                    .to_vec()
            }
        };
        Ok(KeyPair {
            algorithm,
            secret: Zeroizing::new(secret),
            public_key,
            key_id: key_id.into(),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Ed25519: 32 bytes. ES256: 65-byte uncompressed SEC1 point.
    pub fn public_key(&self) -> &[u8] {
        &self.public_key
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("algorithm", &self.algorithm)
            .field("key_id", &self.key_id)
            .field("public_key", &hex::encode(&self.public_key))
            .finish_non_exhaustive()
    }
}

/// Generates a fresh key pair. A seeded `rng` gives a reproducible pair.
pub fn generate_keypair<R: RngCore + CryptoRng>(
    algorithm: Algorithm,
    key_id: impl Into<String>,
    rng: &mut R,
) -> KeyPair {
    let secret: [u8; 32] = match algorithm {
        Algorithm::Ed25519 => {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            seed
        }
        Algorithm::Es256 => p256::ecdsa::SigningKey::random(rng).to_bytes().into(),
    };
    KeyPair::from_secret(algorithm, secret, key_id).expect("freshly generated secrets are valid")
}

/// Signs `message`, returning the raw 64-byte signature.
pub fn sign_message(message: &[u8], key: &KeyPair) -> [u8; SIGNATURE_LEN] {
    match key.algorithm {
        Algorithm::Ed25519 => ed25519_dalek::SigningKey::from_bytes(&key.secret)
            .sign(message)
            .to_bytes(),
        Algorithm::Es256 => {
            let sk = p256::ecdsa::SigningKey::from_bytes(&(*key.secret).into())
                .expect("validated at construction");
            let sig: p256::ecdsa::Signature = sk.sign(message);
            sig.to_bytes().into()
        }
    }
}

/// Signs `message` and wraps the signature in a [`Proof`].
pub fn sign(message: &[u8], key: &KeyPair, created: DateTime<Utc>) -> Proof {
    Proof {
        proof_type: ProofType::from(key.algorithm),
        created: Some(created.to_rfc3339_opts(SecondsFormat::Secs, true)),
        verification_method: Some(key.key_id.clone()),
        signature_value: STANDARD.encode(sign_message(message, key)),
    }
}

/// Verifies a raw signature. Malformed keys or signatures yield `false`.
pub fn verify_signature(
    algorithm: Algorithm,
    message: &[u8],
    signature: &[u8],
    public_key: &[u8],
) -> bool {
    if signature.len() != SIGNATURE_LEN {
        return false;
    }
    match algorithm {
        Algorithm::Ed25519 => {
            let Ok(pk_bytes) = <[u8; 32]>::try_from(public_key) else {
                return false;
            };
            let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk_bytes) else {
                return false;
            };
            let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify_strict(message, &sig).is_ok()
        }
        Algorithm::Es256 => {
            use p256::ecdsa::signature::Verifier as _;
            let Ok(vk) = p256::ecdsa::VerifyingKey::from_sec1_bytes(public_key) else {
                return false;
            };
            let Ok(sig) = p256::ecdsa::Signature::from_slice(signature) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
    }
}

/// Verifies a [`Proof`] over `message`. Total: unsupported proof types,
/// undecodable base64 and wrong signature lengths all yield `false`.
pub fn verify(message: &[u8], proof: &Proof, public_key: &[u8]) -> bool {
    let Some(algorithm) = proof.proof_type.algorithm() else {
        return false;
    };
    let Ok(signature) = STANDARD.decode(proof.signature_value.as_bytes()) else {
        return false;
    };
    verify_signature(algorithm, message, &signature, public_key)
}

/// The `type` member of a proof. Types other than ES256 and Ed25519 are
/// carried through parsing so documents using them can still be read, but
/// they never verify.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProofType {
    Es256,
    Ed25519,
    Unsupported(String),
}

impl ProofType {
    pub fn as_str(&self) -> &str {
        match self {
            ProofType::Es256 => "ES256",
            ProofType::Ed25519 => "Ed25519",
            ProofType::Unsupported(s) => s,
        }
    }

    pub fn algorithm(&self) -> Option<Algorithm> {
        match self {
            ProofType::Es256 => Some(Algorithm::Es256),
            ProofType::Ed25519 => Some(Algorithm::Ed25519),
            ProofType::Unsupported(_) => None,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "ES256" => ProofType::Es256,
            "Ed25519" => ProofType::Ed25519,
            other => ProofType::Unsupported(other.to_string()),
        }
    }
}

impl From<Algorithm> for ProofType {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Es256 => ProofType::Es256,
            Algorithm::Ed25519 => ProofType::Ed25519,
        }
    }
}

impl Serialize for ProofType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ProofType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(ProofType::parse(&String::deserialize(deserializer)?))
    }
}

/// A detached signature attached to a document or transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    #[serde(rename = "type")]
    pub proof_type: ProofType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    #[serde(default, rename = "verificationMethod", skip_serializing_if = "Option::is_none")]
    pub verification_method: Option<String>,
    /// Standard base64 with padding.
    #[serde(rename = "signatureValue")]
    pub signature_value: String,
}

impl Proof {
    pub fn signature_bytes(&self) -> Option<Vec<u8>> {
        STANDARD.decode(self.signature_value.as_bytes()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn now() -> DateTime<Utc> {
        DateTime::from_timestamp(1_600_000_000, 0).unwrap()
    }

    #[test]
    fn proof_type_names_follow_the_key_algorithm() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for (alg, name) in [(Algorithm::Es256, "ES256"), (Algorithm::Ed25519, "Ed25519")] {
            let key = generate_keypair(alg, "did:example:1#k", &mut rng);
            let proof = sign(b"m", &key, now());
            assert_eq!(proof.proof_type.as_str(), name);
            assert_eq!(proof.signature_bytes().unwrap().len(), SIGNATURE_LEN);
            assert_eq!(proof.verification_method.as_deref(), Some("did:example:1#k"));
        }
    }

    #[test]
    fn es256_is_deterministic_and_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let key = generate_keypair(Algorithm::Es256, "k", &mut rng);
        assert_eq!(key.public_key().len(), 65);
        let a = sign_message(b"hello", &key);
        let b = sign_message(b"hello", &key);
        assert_eq!(a, b);
        assert!(verify_signature(Algorithm::Es256, b"hello", &a, key.public_key()));
        assert!(!verify_signature(Algorithm::Es256, b"hellp", &a, key.public_key()));
    }

    #[test]
    fn malformed_inputs_are_false_not_panics() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let key = generate_keypair(Algorithm::Ed25519, "k", &mut rng);
        let mut proof = sign(b"m", &key, now());
        assert!(verify(b"m", &proof, key.public_key()));
        assert!(!verify(b"m", &proof, &[1, 2, 3]));
        assert!(!verify(b"m", &proof, &[]));
        proof.signature_value = STANDARD.encode([0u8; 63]);
        assert!(!verify(b"m", &proof, key.public_key()));
        proof.signature_value = "***not base64***".into();
        assert!(!verify(b"m", &proof, key.public_key()));
        proof.proof_type = ProofType::Unsupported("RsaSignature2018".into());
        assert!(!verify(b"m", &proof, key.public_key()));
    }

    #[test]
    fn algorithms_do_not_cross_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let ed = generate_keypair(Algorithm::Ed25519, "k", &mut rng);
        let sig = sign_message(b"m", &ed);
        assert!(!verify_signature(Algorithm::Es256, b"m", &sig, ed.public_key()));
    }

    #[test]
    fn es256_rejects_zero_scalar() {
        assert!(matches!(
            KeyPair::from_secret(Algorithm::Es256, [0u8; 32], "k"),
            Err(CryptoError::InvalidSecret(Algorithm::Es256))
        ));
    }
}
