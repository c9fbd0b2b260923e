//! AES-256-GCM sealing of off-chain payloads.
//!
//! Every call to [`encrypt_payload`] draws a fresh 12-byte nonce. The sealed
//! form keeps ciphertext, nonce and tag separate; [`SealedPayload::to_bytes`]
//! packs them as `nonce | ciphertext | tag` for storage.

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::CryptoError;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedPayload {
    pub ciphertext: Vec<u8>,
    pub nonce: [u8; NONCE_LEN],
    pub tag: [u8; TAG_LEN],
}

impl SealedPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::Truncated);
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (ciphertext, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(SealedPayload {
            ciphertext: ciphertext.to_vec(),
            nonce: nonce.try_into().expect("split at NONCE_LEN"),
            tag: tag.try_into().expect("split at TAG_LEN"),
        })
    }
}

/// Base64 field form used by the keystore file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedFields {
    pub ciphertext: String,
    pub nonce: String,
    pub tag: String,
}

impl From<&SealedPayload> for SealedFields {
    fn from(p: &SealedPayload) -> Self {
        SealedFields {
            ciphertext: STANDARD.encode(&p.ciphertext),
            nonce: STANDARD.encode(p.nonce),
            tag: STANDARD.encode(p.tag),
        }
    }
}

impl TryFrom<&SealedFields> for SealedPayload {
    type Error = CryptoError;

    fn try_from(f: &SealedFields) -> Result<Self, Self::Error> {
        let decode = |s: &str| STANDARD.decode(s).map_err(|_| CryptoError::Truncated);
        Ok(SealedPayload {
            ciphertext: decode(&f.ciphertext)?,
            nonce: decode(&f.nonce)?
                .try_into()
                .map_err(|_| CryptoError::Truncated)?,
            tag: decode(&f.tag)?
                .try_into()
                .map_err(|_| CryptoError::Truncated)?,
        })
    }
}

fn cipher(key: &[u8]) -> Result<Aes256Gcm, CryptoError> {
    if key.len() != KEY_LEN {
        return Err(CryptoError::BadKeyLength {
            expected: KEY_LEN,
            actual: key.len(),
        });
    }
    Ok(Aes256Gcm::new_from_slice(key).expect("length checked"))
}

fn seal(plaintext: &[u8], key: &[u8], nonce: [u8; NONCE_LEN]) -> Result<SealedPayload, CryptoError> {
    let cipher = cipher(key)?;
    let mut buffer = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(&Nonce::from(nonce), b"", &mut buffer)
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(SealedPayload {
        ciphertext: buffer,
        nonce,
        tag: tag.into(),
    })
}

/// Seals `plaintext` under a 32-byte key with a fresh random nonce.
pub fn encrypt_payload<R: RngCore + CryptoRng>(
    plaintext: &[u8],
    key: &[u8],
    rng: &mut R,
) -> Result<SealedPayload, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    seal(plaintext, key, nonce)
}

/// Seals with a caller-chosen nonce. Only for reproducing known-answer vectors.
#[cfg(feature = "nonce-injection")]
pub fn encrypt_payload_with_nonce(
    plaintext: &[u8],
    key: &[u8],
    nonce: [u8; NONCE_LEN],
) -> Result<SealedPayload, CryptoError> {
    seal(plaintext, key, nonce)
}

/// Opens a sealed payload. Nothing is returned unless the tag authenticates.
pub fn decrypt_payload(sealed: &SealedPayload, key: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let cipher = cipher(key)?;
    let mut buffer = sealed.ciphertext.clone();
    match cipher.decrypt_in_place_detached(
        &Nonce::from(sealed.nonce),
        b"",
        &mut buffer,
        &Tag::from(sealed.tag),
    ) {
        Ok(()) => Ok(buffer),
        Err(_) => Err(CryptoError::AuthFailure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empty_plaintext_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let key = [7u8; 32];
        let sealed = encrypt_payload(b"", &key, &mut rng).unwrap();
        assert!(sealed.ciphertext.is_empty());
        assert_eq!(decrypt_payload(&sealed, &key).unwrap(), b"");
    }

    #[test]
    fn bad_key_lengths() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            encrypt_payload(b"x", &[0u8; 16], &mut rng),
            Err(CryptoError::BadKeyLength { expected: 32, actual: 16 })
        );
        let sealed = encrypt_payload(b"x", &[0u8; 32], &mut rng).unwrap();
        assert!(matches!(
            decrypt_payload(&sealed, &[0u8; 31]),
            Err(CryptoError::BadKeyLength { .. })
        ));
    }

    #[test]
    fn wrong_key_fails() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let sealed = encrypt_payload(b"secret", &[1u8; 32], &mut rng).unwrap();
        assert_eq!(decrypt_payload(&sealed, &[2u8; 32]), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn packed_form_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let sealed = encrypt_payload(b"packed", &[3u8; 32], &mut rng).unwrap();
        let bytes = sealed.to_bytes();
        assert_eq!(bytes.len(), NONCE_LEN + 6 + TAG_LEN);
        assert_eq!(SealedPayload::from_bytes(&bytes).unwrap(), sealed);
        assert_eq!(SealedPayload::from_bytes(&bytes[..27]), Err(CryptoError::Truncated));
        let fields = SealedFields::from(&sealed);
        assert_eq!(SealedPayload::try_from(&fields).unwrap(), sealed);
    }
}
