//! Passphrase-protected keystore.
//!
//! On disk the keystore is a JSON object mapping key ids to entries:
//!
//! ```json
//! {
//!   "did:example:456#key-1": {
//!     "algorithm": "Ed25519",
//!     "publicKey": "<base64>",
//!     "sealedPrivateKey": { "ciphertext": "<base64>", "nonce": "<base64>", "tag": "<base64>" },
//!     "salt": "<base64>",
//!     "issuerUri": "https://university.example.edu"
//!   }
//! }
//! ```
//!
//! Private keys are sealed with AES-256-GCM under a key derived from the
//! passphrase with PBKDF2-HMAC-SHA256. Blob sealing keys live in the same map
//! under `blob:<content address>` with algorithm `A256GCM`; destroying one
//! renders its blob unreadable.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

use super::hash::ContentAddress;
use super::seal::{decrypt_payload, encrypt_payload, SealedFields, SealedPayload, KEY_LEN};
use super::sign::KeyPair;
use super::{Algorithm, CryptoError};

pub const PBKDF2_ROUNDS: u32 = 100_000;
const SALT_LEN: usize = 16;
const BLOB_PREFIX: &str = "blob:";

#[derive(Debug, thiserror::Error)]
pub enum KeystoreError {
    #[error("key id `{0}` already exists")]
    DuplicateKeyId(String),
    #[error("no key with id `{0}`")]
    UnknownKey(String),
    #[error("wrong passphrase or corrupted keystore entry `{0}`")]
    BadPassphrase(String),
    #[error("malformed keystore: {0}")]
    Malformed(String),
    #[error("keystore io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyKind {
    #[serde(rename = "ES256")]
    Es256,
    #[serde(rename = "Ed25519")]
    Ed25519,
    #[serde(rename = "A256GCM")]
    A256Gcm,
}

impl KeyKind {
    fn signing(self) -> Option<Algorithm> {
        match self {
            KeyKind::Es256 => Some(Algorithm::Es256),
            KeyKind::Ed25519 => Some(Algorithm::Ed25519),
            KeyKind::A256Gcm => None,
        }
    }
}

impl From<Algorithm> for KeyKind {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Es256 => KeyKind::Es256,
            Algorithm::Ed25519 => KeyKind::Ed25519,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyEntry {
    pub algorithm: KeyKind,
    pub public_key: String,
    pub sealed_private_key: SealedFields,
    pub salt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer_uri: Option<String>,
}

/// Public view of a signing key held in the keystore.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKeyInfo {
    pub key_id: String,
    pub algorithm: Algorithm,
    pub public_key: Vec<u8>,
    pub issuer_uri: Option<String>,
}

pub struct KeyStore {
    path: Option<PathBuf>,
    entries: BTreeMap<String, KeyEntry>,
    passphrase: Zeroizing<String>,
    salt: [u8; SALT_LEN],
    derived: HashMap<[u8; SALT_LEN], Zeroizing<[u8; KEY_LEN]>>,
}

fn derive(passphrase: &str, salt: &[u8; SALT_LEN]) -> Zeroizing<[u8; KEY_LEN]> {
    let mut key = Zeroizing::new([0u8; KEY_LEN]);
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, PBKDF2_ROUNDS, key.as_mut());
    key
}

impl KeyStore {
    /// A keystore that lives only in memory.
    pub fn in_memory<R: RngCore + CryptoRng>(passphrase: &str, rng: &mut R) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        KeyStore {
            path: None,
            entries: BTreeMap::new(),
            passphrase: Zeroizing::new(passphrase.to_string()),
            salt,
            derived: HashMap::new(),
        }
    }

    /// Opens the keystore at `path`, creating an empty one if the file does
    /// not exist. The passphrase is checked against the first entry.
    pub fn open<R: RngCore + CryptoRng>(
        path: impl AsRef<Path>,
        passphrase: &str,
        rng: &mut R,
    ) -> Result<Self, KeystoreError> {
        let path = path.as_ref();
        let mut store = KeyStore::in_memory(passphrase, rng);
        store.path = Some(path.to_path_buf());
        if !path.exists() {
            return Ok(store);
        }
        let text = fs::read_to_string(path)?;
        store.entries =
            serde_json::from_str(&text).map_err(|e| KeystoreError::Malformed(e.to_string()))?;
        if let Some((key_id, entry)) = store.entries.iter().next() {
            let salt = decode_salt(&entry.salt)?;
            store.salt = salt;
            let key_id = key_id.clone();
            store.open_entry(&key_id)?;
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes the keystore back to its file (no-op for in-memory stores).
    pub fn save(&self) -> Result<(), KeystoreError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let text = serde_json::to_string_pretty(&self.entries)
            .map_err(|e| KeystoreError::Malformed(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn master_for(&mut self, salt: [u8; SALT_LEN]) -> Zeroizing<[u8; KEY_LEN]> {
        let passphrase = self.passphrase.clone();
        self.derived
            .entry(salt)
            .or_insert_with(|| derive(&passphrase, &salt))
            .clone()
    }

    fn seal_secret<R: RngCore + CryptoRng>(&mut self, secret: &[u8], rng: &mut R) -> SealedFields {
        let master = self.master_for(self.salt);
        let sealed = encrypt_payload(secret, master.as_ref(), rng).expect("master key is 32 bytes");
        SealedFields::from(&sealed)
    }

    fn open_entry(&mut self, key_id: &str) -> Result<Zeroizing<[u8; 32]>, KeystoreError> {
        let entry = self
            .entries
            .get(key_id)
            .ok_or_else(|| KeystoreError::UnknownKey(key_id.to_string()))?;
        let salt = decode_salt(&entry.salt)?;
        let sealed = SealedPayload::try_from(&entry.sealed_private_key)
            .map_err(|_| KeystoreError::Malformed(format!("sealed key of `{key_id}`")))?;
        let master = self.master_for(salt);
        let plain = match decrypt_payload(&sealed, master.as_ref()) {
            Ok(p) => Zeroizing::new(p),
            Err(CryptoError::AuthFailure) => {
                return Err(KeystoreError::BadPassphrase(key_id.to_string()))
            }
            Err(e) => return Err(KeystoreError::Malformed(e.to_string())),
        };
        let secret: [u8; 32] = plain
            .as_slice()
            .try_into()
            .map_err(|_| KeystoreError::Malformed(format!("secret length of `{key_id}`")))?;
        Ok(Zeroizing::new(secret))
    }

    pub fn contains(&self, key_id: &str) -> bool {
        self.entries.contains_key(key_id)
    }

    pub fn insert_keypair<R: RngCore + CryptoRng>(
        &mut self,
        key: &KeyPair,
        issuer_uri: Option<String>,
        rng: &mut R,
    ) -> Result<(), KeystoreError> {
        if self.entries.contains_key(key.key_id()) {
            return Err(KeystoreError::DuplicateKeyId(key.key_id().to_string()));
        }
        let sealed = self.seal_secret(key.secret_bytes(), rng);
        self.entries.insert(
            key.key_id().to_string(),
            KeyEntry {
                algorithm: key.algorithm().into(),
                public_key: STANDARD.encode(key.public_key()),
                sealed_private_key: sealed,
                salt: STANDARD.encode(self.salt),
                issuer_uri,
            },
        );
        Ok(())
    }

    pub fn keypair(&mut self, key_id: &str) -> Result<KeyPair, KeystoreError> {
        let algorithm = self
            .entries
            .get(key_id)
            .and_then(|e| e.algorithm.signing())
            .ok_or_else(|| KeystoreError::UnknownKey(key_id.to_string()))?;
        let secret = self.open_entry(key_id)?;
        KeyPair::from_secret(algorithm, *secret, key_id)
            .map_err(|e| KeystoreError::Malformed(e.to_string()))
    }

    /// Signing keys, in key-id order.
    pub fn signing_keys(&self) -> Vec<PublicKeyInfo> {
        self.entries
            .iter()
            .filter_map(|(id, e)| {
                let algorithm = e.algorithm.signing()?;
                Some(PublicKeyInfo {
                    key_id: id.clone(),
                    algorithm,
                    public_key: STANDARD.decode(&e.public_key).ok()?,
                    issuer_uri: e.issuer_uri.clone(),
                })
            })
            .collect()
    }

    pub fn insert_blob_key<R: RngCore + CryptoRng>(
        &mut self,
        address: &ContentAddress,
        key: &[u8; KEY_LEN],
        rng: &mut R,
    ) {
        let sealed = self.seal_secret(key, rng);
        self.entries.insert(
            format!("{BLOB_PREFIX}{address}"),
            KeyEntry {
                algorithm: KeyKind::A256Gcm,
                public_key: String::new(),
                sealed_private_key: sealed,
                salt: STANDARD.encode(self.salt),
                issuer_uri: None,
            },
        );
    }

    pub fn blob_key(&mut self, address: &ContentAddress) -> Option<Zeroizing<[u8; KEY_LEN]>> {
        self.open_entry(&format!("{BLOB_PREFIX}{address}")).ok()
    }

    /// Destroys the sealing key of a blob. Returns whether a key was held.
    pub fn destroy_blob_key(&mut self, address: &ContentAddress) -> bool {
        self.entries
            .remove(&format!("{BLOB_PREFIX}{address}"))
            .is_some()
    }
}

fn decode_salt(s: &str) -> Result<[u8; SALT_LEN], KeystoreError> {
    STANDARD
        .decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| KeystoreError::Malformed("salt".into()))
}
