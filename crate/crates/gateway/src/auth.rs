//! ES256 bearer tokens and the principal they resolve to.
//!
//! A token is `base64url(header) . base64url(claims) . base64url(r || s)`
//! with header `{"alg":"ES256","typ":"JWT"}`. Checks run in a fixed order:
//! structure, subject lookup, signature, expiry.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use bacip_core::credential::Did;
use bacip_core::crypto::{sign_message, verify_signature, Algorithm, KeyPair, SIGNATURE_LEN};
use bacip_core::ledger::{LedgerState, PermissionBits};

/// Lifetime given to tokens minted without an explicit expiry.
pub const DEFAULT_TOKEN_LIFETIME: i64 = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Issuer,
    Verifier,
    Student,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Issuer, Role::Verifier, Role::Student];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Issuer => "Issuer",
            Role::Verifier => "Verifier",
            Role::Student => "Student",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenHeader {
    pub alg: String,
    pub typ: String,
}

impl Default for TokenHeader {
    fn default() -> Self {
        TokenHeader {
            alg: "ES256".into(),
            typ: "JWT".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: String,
    pub name: String,
    pub iat: i64,
    pub exp: i64,
    pub role: Role,
}

impl Claims {
    pub fn new(sub: impl Into<String>, name: impl Into<String>, role: Role, iat: i64) -> Self {
        Claims {
            sub: sub.into(),
            name: name.into(),
            iat,
            exp: iat + DEFAULT_TOKEN_LIFETIME,
            role,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("missing bearer token")]
    Missing,
    #[error("malformed token: {0}")]
    MalformedToken(String),
    #[error("token subject is not registered")]
    UnknownSubject,
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token expired")]
    Expired,
}

impl AuthError {
    pub fn code(&self) -> &'static str {
        match self {
            AuthError::Missing => "MissingToken",
            AuthError::MalformedToken(_) => "MalformedToken",
            AuthError::UnknownSubject => "UnknownSubject",
            AuthError::BadSignature => "BadSignature",
            AuthError::Expired => "Expired",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("tokens are signed with ES256 keys, not {0:?}")]
pub struct WrongAlgorithm(pub Algorithm);

/// Signs `claims` with `key`, which must be a P-256 key.
pub fn mint_token(claims: &Claims, key: &KeyPair) -> Result<String, WrongAlgorithm> {
    if key.algorithm() != Algorithm::Es256 {
        return Err(WrongAlgorithm(key.algorithm()));
    }
    let header = serde_json::to_vec(&TokenHeader::default()).expect("header serializes");
    let body = serde_json::to_vec(claims).expect("claims serialize");
    let signing_input = format!("{}.{}", URL_SAFE_NO_PAD.encode(header), URL_SAFE_NO_PAD.encode(body));
    let sig = sign_message(signing_input.as_bytes(), key);
    Ok(format!("{signing_input}.{}", URL_SAFE_NO_PAD.encode(sig)))
}

/// An authenticated caller. Permission bits come from the ledger snapshot
/// the token was checked against, never from the token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Principal {
    pub subject: String,
    pub did: Did,
    pub name: String,
    pub role: Role,
    pub key_id: String,
    pub permissions: PermissionBits,
}

struct Parsed<'a> {
    signing_input: &'a str,
    claims: Claims,
    signature: [u8; SIGNATURE_LEN],
}

fn malformed(what: impl Into<String>) -> AuthError {
    AuthError::MalformedToken(what.into())
}

fn parse(raw: &str) -> Result<Parsed<'_>, AuthError> {
    let mut parts = raw.split('.');
    let (Some(h), Some(c), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(malformed("expected three dot-separated segments"));
    };
    let decode = |seg: &str, what: &str| URL_SAFE_NO_PAD.decode(seg).map_err(|_| malformed(format!("{what} is not base64url")));
    let header: TokenHeader =
        serde_json::from_slice(&decode(h, "header")?).map_err(|e| malformed(format!("header: {e}")))?;
    if header.alg != "ES256" || header.typ != "JWT" {
        return Err(malformed(format!("unsupported header {}/{}", header.alg, header.typ)));
    }
    let claims: Claims =
        serde_json::from_slice(&decode(c, "claims")?).map_err(|e| malformed(format!("claims: {e}")))?;
    let signature: [u8; SIGNATURE_LEN] = decode(s, "signature")?
        .try_into()
        .map_err(|_| malformed("signature must be 64 bytes"))?;
    Ok(Parsed {
        signing_input: &raw[..h.len() + 1 + c.len()],
        claims,
        signature,
    })
}

/// Verifies `raw` against the ES256 keys registered for its subject.
pub fn authenticate(raw: &str, state: &LedgerState, now: DateTime<Utc>) -> Result<Principal, AuthError> {
    let parsed = parse(raw)?;
    let key = {
        let mut candidates = state
            .keys_for_subject(&parsed.claims.sub)
            .filter(|k| k.algorithm == Algorithm::Es256)
            .peekable();
        if candidates.peek().is_none() {
            return Err(AuthError::UnknownSubject);
        }
        candidates
            .find(|k| verify_signature(Algorithm::Es256, parsed.signing_input.as_bytes(), &parsed.signature, &k.public_key))
            .ok_or(AuthError::BadSignature)?
            .clone()
    };
    if now.timestamp() >= parsed.claims.exp {
        return Err(AuthError::Expired);
    }
    let Claims { sub, name, role, .. } = parsed.claims;
    Ok(Principal {
        subject: sub,
        did: key.did.clone(),
        name,
        role,
        key_id: key.key_id.clone(),
        permissions: state.permissions(&key.did),
    })
}

/// Extracts the token from an `Authorization: Bearer <token>` value.
pub fn bearer(header: Option<&str>) -> Result<&str, AuthError> {
    let value = header.ok_or(AuthError::Missing)?;
    let token = value
        .strip_prefix("Bearer ")
        .or_else(|| value.strip_prefix("bearer "))
        .ok_or_else(|| malformed("authorization scheme must be Bearer"))?;
    Ok(token.trim())
}
