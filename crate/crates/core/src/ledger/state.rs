use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::genesis::decode_public_key;
use super::{
    AuditEvent, AuditFilter, Block, Effect, EventName, Genesis, GenesisError, PermissionBits,
    RevocationKey, RevocationPolicy, Transaction, TxPayload, ValidatorId,
};
use crate::credential::{
    canonicalize, parse_value, temporal_status, CredentialDocument, CredentialId, Did, PointerId,
    ValidityStatus,
};
use crate::crypto::{verify, Algorithm, ContentAddress, Hash32, Proof};
use crate::merkle::{merkle_path, merkle_root, PathStep};

/// A key from the genesis registry with its decoded public key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisteredKey {
    pub did: Did,
    pub key_id: String,
    pub algorithm: Algorithm,
    pub public_key: Vec<u8>,
    pub issuer_uri: Option<String>,
    pub subject: Option<String>,
}

impl RegisteredKey {
    /// Whether this key may sign for the document issuer `issuer`.
    pub fn controls_issuer(&self, issuer: &str) -> bool {
        self.did.as_str() == issuer || self.issuer_uri.as_deref() == Some(issuer)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CredentialRecord {
    pub issuer: Did,
    pub holder: Did,
    pub content_address: ContentAddress,
    pub sealed: bool,
    pub doc_hash: Hash32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<PointerId>,
}

/// Why a transaction is invalid. The first failing check wins.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InvalidReason {
    #[error("sender is not a registered participant")]
    UnknownSender,
    #[error("sender signature does not verify")]
    BadSignature,
    #[error("transaction already applied")]
    DuplicateTransaction,
    #[error("document schema violation: {0}")]
    SchemaViolation(String),
    #[error("sender lacks permission {0:?}")]
    MissingPermission(PermissionBits),
    #[error("credential id already issued")]
    DuplicateId,
    #[error("document issuer is not controlled by the sender")]
    IssuerMismatch,
    #[error("document proof does not verify against the sender's key")]
    InvalidDocumentSignature,
    #[error("no credential with this revocation key")]
    UnknownCredential,
    #[error("credential already revoked")]
    AlreadyRevoked,
    #[error("only the issuer may revoke this credential")]
    NotCredentialIssuer,
    #[error("consent transactions must be sent by their subject")]
    NotSubject,
    #[error("consent has not been given")]
    ConsentNotGiven,
    #[error("consent is still given")]
    ConsentStillGiven,
    #[error("sender is not an administrator")]
    NotAdmin,
    #[error("unknown permission bits {0:#b}")]
    UnknownPermissionBits(u32),
}

impl InvalidReason {
    pub fn code(&self) -> &'static str {
        match self {
            InvalidReason::UnknownSender => "UnknownSender",
            InvalidReason::BadSignature => "BadSignature",
            InvalidReason::DuplicateTransaction => "DuplicateTransaction",
            InvalidReason::SchemaViolation(_) => "SchemaViolation",
            InvalidReason::MissingPermission(_) => "MissingPermission",
            InvalidReason::DuplicateId => "DuplicateId",
            InvalidReason::IssuerMismatch => "IssuerMismatch",
            InvalidReason::InvalidDocumentSignature => "InvalidDocumentSignature",
            InvalidReason::UnknownCredential => "UnknownCredential",
            InvalidReason::AlreadyRevoked => "AlreadyRevoked",
            InvalidReason::NotCredentialIssuer => "NotCredentialIssuer",
            InvalidReason::NotSubject => "NotSubject",
            InvalidReason::ConsentNotGiven => "ConsentNotGiven",
            InvalidReason::ConsentStillGiven => "ConsentStillGiven",
            InvalidReason::NotAdmin => "NotAdmin",
            InvalidReason::UnknownPermissionBits(_) => "UnknownPermissionBits",
        }
    }
}

/// Applying an invalid transaction is a caller bug.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("contract violation: applied an invalid transaction ({0})")]
pub struct ContractViolation(pub InvalidReason);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxOutcome {
    pub tx_id: Hash32,
    pub events: Vec<AuditEvent>,
    pub effects: Vec<Effect>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("block height {got} does not follow {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("block parent hash does not match the chain tip")]
    WrongParent,
    #[error("transaction {index} is invalid: {reason}")]
    InvalidTransaction { index: usize, reason: InvalidReason },
    #[error("rejected transaction {index} is in fact valid")]
    FalselyRejected { index: usize },
    #[error("state root mismatch")]
    StateRootMismatch,
}

/// Result of applying a block: its events in order and the off-chain
/// effects of its accepted transactions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockOutcome {
    pub applied: Vec<TxOutcome>,
    pub rejected: Vec<(Hash32, InvalidReason)>,
    pub events: Vec<AuditEvent>,
    pub effects: Vec<Effect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationOutcome {
    Valid,
    Revoked,
    Expired,
    NotYetValid,
    InvalidSignature,
    UnknownIssuer,
    Malformed,
}

impl VerificationOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            VerificationOutcome::Valid => "valid",
            VerificationOutcome::Revoked => "revoked",
            VerificationOutcome::Expired => "expired",
            VerificationOutcome::NotYetValid => "not_yet_valid",
            VerificationOutcome::InvalidSignature => "invalid_signature",
            VerificationOutcome::UnknownIssuer => "unknown_issuer",
            VerificationOutcome::Malformed => "malformed",
        }
    }
}

impl fmt::Display for VerificationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Replicated ledger state. Cloning is cheap enough to validate a block on
/// a scratch copy; the key registry is shared.
#[derive(Clone, Debug)]
pub struct LedgerState {
    genesis_hash: Hash32,
    keys: Arc<BTreeMap<String, RegisteredKey>>,
    admin: Did,
    policy: RevocationPolicy,
    credentials: BTreeMap<CredentialId, CredentialRecord>,
    by_revocation_key: BTreeMap<RevocationKey, CredentialId>,
    revoked: BTreeSet<RevocationKey>,
    consent: BTreeMap<Did, bool>,
    roles: BTreeMap<Did, PermissionBits>,
    audit_log: Vec<AuditEvent>,
    applied_txs: BTreeSet<Hash32>,
    height: u64,
    tip_hash: Hash32,
    state_root: Hash32,
}

impl LedgerState {
    pub fn from_genesis(genesis: &Genesis) -> Result<Self, GenesisError> {
        let mut keys = BTreeMap::new();
        let mut subjects: BTreeMap<&str, &Did> = BTreeMap::new();
        for p in &genesis.participants {
            let public_key = decode_public_key(p)?;
            if let Some(sub) = p.subject.as_deref() {
                if subjects.insert(sub, &p.did).is_some_and(|d| *d != p.did) {
                    return Err(GenesisError::DuplicateSubject(sub.to_string()));
                }
            }
            let key = RegisteredKey {
                did: p.did.clone(),
                key_id: p.key_id.clone(),
                algorithm: p.algorithm,
                public_key,
                issuer_uri: p.issuer_uri.clone(),
                subject: p.subject.clone(),
            };
            if keys.insert(p.key_id.clone(), key).is_some() {
                return Err(GenesisError::DuplicateKeyId(p.key_id.clone()));
            }
        }
        let mut roles = BTreeMap::new();
        for (did, bits) in &genesis.roles {
            let bits = PermissionBits::from_bits(*bits)
                .ok_or_else(|| GenesisError::UnknownPermissionBits(did.clone()))?;
            roles.insert(did.clone(), bits);
        }
        Ok(LedgerState {
            genesis_hash: genesis.hash(),
            keys: Arc::new(keys),
            admin: genesis.admin.clone(),
            policy: genesis.revocation_policy,
            credentials: BTreeMap::new(),
            by_revocation_key: BTreeMap::new(),
            revoked: BTreeSet::new(),
            consent: BTreeMap::new(),
            roles,
            audit_log: Vec::new(),
            applied_txs: BTreeSet::new(),
            height: 0,
            tip_hash: genesis.hash(),
            state_root: merkle_root(&[]),
        })
    }

    pub fn genesis_hash(&self) -> Hash32 {
        self.genesis_hash
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn tip_hash(&self) -> Hash32 {
        self.tip_hash
    }

    pub fn admin(&self) -> &Did {
        &self.admin
    }

    pub fn credentials(&self) -> &BTreeMap<CredentialId, CredentialRecord> {
        &self.credentials
    }

    pub fn credential(&self, id: &CredentialId) -> Option<&CredentialRecord> {
        self.credentials.get(id)
    }

    pub fn credential_by_key(&self, key: &RevocationKey) -> Option<&CredentialId> {
        self.by_revocation_key.get(key)
    }

    pub fn consent(&self, subject: &Did) -> Option<bool> {
        self.consent.get(subject).copied()
    }

    pub fn roles(&self) -> &BTreeMap<Did, PermissionBits> {
        &self.roles
    }

    pub fn audit_log(&self) -> &[AuditEvent] {
        &self.audit_log
    }

    pub fn keys(&self) -> impl Iterator<Item = &RegisteredKey> {
        self.keys.values()
    }

    pub fn key(&self, key_id: &str) -> Option<&RegisteredKey> {
        self.keys.get(key_id)
    }

    /// The participant a bearer-token subject names: either its DID or its
    /// registered subject alias.
    pub fn keys_for_subject<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a RegisteredKey> + 'a {
        self.keys
            .values()
            .filter(move |k| k.did.as_str() == subject || k.subject.as_deref() == Some(subject))
    }

    pub fn is_participant(&self, did: &Did) -> bool {
        self.keys.values().any(|k| k.did == *did)
    }

    pub fn is_revoked(&self, key: &RevocationKey) -> bool {
        self.revoked.contains(key)
    }

    pub fn permissions(&self, user: &Did) -> PermissionBits {
        self.roles.get(user).copied().unwrap_or_default()
    }

    /// `roles[user] & required == required`; unknown users hold nothing.
    pub fn authorize_action(&self, user: &Did, required: PermissionBits) -> bool {
        self.permissions(user).contains(required)
    }

    fn is_admin(&self, user: &Did) -> bool {
        *user == self.admin || self.authorize_action(user, PermissionBits::ADMIN)
    }

    /// Stored commitment after the last applied block.
    pub fn state_root(&self) -> Hash32 {
        self.state_root
    }

    /// Leaf of credential `id`: `SHA-256(id || docHash || revoked)`.
    pub fn leaf_hash(id: &CredentialId, doc_hash: &Hash32, revoked: bool) -> Hash32 {
        Hash32::of_parts(&[id.as_str().as_bytes(), doc_hash.as_bytes(), &[revoked as u8]])
    }

    fn leaves(&self) -> Vec<Hash32> {
        self.credentials
            .iter()
            .map(|(id, rec)| {
                Self::leaf_hash(id, &rec.doc_hash, self.is_revoked(&RevocationKey::of(id)))
            })
            .collect()
    }

    /// Merkle root over the credential leaves in id order.
    pub fn state_commitment(&self) -> Hash32 {
        merkle_root(&self.leaves())
    }

    /// Leaf and sibling path of credential `id` in the current commitment.
    pub fn credential_path(&self, id: &CredentialId) -> Option<(Hash32, Vec<PathStep>)> {
        let index = self.credentials.keys().position(|k| k == id)?;
        let leaves = self.leaves();
        let path = merkle_path(&leaves, index)?;
        Some((leaves[index], path))
    }

    pub fn audit_query(&self, filter: &AuditFilter) -> Vec<AuditEvent> {
        self.audit_log
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect()
    }

    fn sender_key(&self, tx: &Transaction) -> Result<&RegisteredKey, InvalidReason> {
        if !self.is_participant(&tx.sender) {
            return Err(InvalidReason::UnknownSender);
        }
        let bytes = tx.signing_bytes();
        let verifies = |k: &&RegisteredKey| {
            k.did == tx.sender && proof_matches(k, &tx.signature) && verify(&bytes, &tx.signature, &k.public_key)
        };
        match tx.signature.verification_method.as_deref() {
            Some(vm) => self.keys.get(vm).filter(verifies),
            None => self.keys.values().find(verifies),
        }
        .ok_or(InvalidReason::BadSignature)
    }

    /// Runs the validation pipeline. Pure; the result depends only on the
    /// state and the transaction.
    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), InvalidReason> {
        let sender_key = self.sender_key(tx)?;
        if self.applied_txs.contains(&tx.tx_id()) {
            return Err(InvalidReason::DuplicateTransaction);
        }
        let sender = &tx.sender;
        match &tx.payload {
            TxPayload::IssueCredential { document, .. } => {
                let (id, proof) = match (&document.id, &document.proof) {
                    (Some(id), Some(proof)) => (id, proof),
                    (None, _) => return Err(InvalidReason::SchemaViolation("/id: required".into())),
                    (_, None) => {
                        return Err(InvalidReason::SchemaViolation("/proof: required".into()))
                    }
                };
                if let Err(e) = parse_value(&document.to_json()) {
                    return Err(InvalidReason::SchemaViolation(e.to_string()));
                }
                if !self.authorize_action(sender, PermissionBits::ISSUE) {
                    return Err(InvalidReason::MissingPermission(PermissionBits::ISSUE));
                }
                if self.credentials.contains_key(id) {
                    return Err(InvalidReason::DuplicateId);
                }
                let signer = self.document_signer(document, proof, sender);
                match signer {
                    None => Err(InvalidReason::IssuerMismatch),
                    Some(k) if !proof_matches(k, proof) => Err(InvalidReason::InvalidDocumentSignature),
                    Some(k) if !verify(&canonicalize(document, true), proof, &k.public_key) => {
                        Err(InvalidReason::InvalidDocumentSignature)
                    }
                    Some(_) => Ok(()),
                }
            }
            TxPayload::RevokeCredential { key } => {
                if !self.authorize_action(sender, PermissionBits::REVOKE) {
                    return Err(InvalidReason::MissingPermission(PermissionBits::REVOKE));
                }
                let Some(id) = self.by_revocation_key.get(key) else {
                    return Err(InvalidReason::UnknownCredential);
                };
                if self.is_revoked(key) {
                    return Err(InvalidReason::AlreadyRevoked);
                }
                if self.policy == RevocationPolicy::IssuerOnly && self.credentials[id].issuer != *sender {
                    return Err(InvalidReason::NotCredentialIssuer);
                }
                Ok(())
            }
            TxPayload::GiveConsent { subject } => {
                if subject != sender {
                    return Err(InvalidReason::NotSubject);
                }
                Ok(())
            }
            TxPayload::WithdrawConsent { subject } => {
                if subject != sender {
                    return Err(InvalidReason::NotSubject);
                }
                if self.consent(subject) != Some(true) {
                    return Err(InvalidReason::ConsentNotGiven);
                }
                Ok(())
            }
            TxPayload::DeleteData { subject } => {
                if subject != sender {
                    return Err(InvalidReason::NotSubject);
                }
                if self.consent(subject) == Some(true) {
                    return Err(InvalidReason::ConsentStillGiven);
                }
                Ok(())
            }
            TxPayload::SetPermissions { permissions, .. } => {
                if !self.is_admin(sender) {
                    return Err(InvalidReason::NotAdmin);
                }
                if PermissionBits::from_bits(*permissions).is_none() {
                    return Err(InvalidReason::UnknownPermissionBits(*permissions));
                }
                let _ = sender_key;
                Ok(())
            }
        }
    }

    /// The sender key that signed `document`: the key named by the proof's
    /// verification method if the sender owns it and it controls the
    /// document issuer, otherwise any such key of the sender.
    fn document_signer(&self, document: &CredentialDocument, proof: &Proof, sender: &Did) -> Option<&RegisteredKey> {
        let eligible = |k: &&RegisteredKey| k.did == *sender && k.controls_issuer(&document.issuer);
        match proof.verification_method.as_deref() {
            Some(vm) => self.keys.get(vm).filter(eligible),
            None => self.keys.values().find(eligible),
        }
    }

    fn push_event(&mut self, tx: &Transaction, tx_id: Hash32, name: EventName, subject: String, detail: Option<String>) -> AuditEvent {
        let event = AuditEvent {
            index: self.audit_log.len() as u64,
            height: self.height + 1,
            tx_id,
            event_name: name,
            subject,
            timestamp: tx.timestamp,
            detail,
        };
        self.audit_log.push(event.clone());
        event
    }

    /// Applies a valid transaction and appends its audit event. Events carry
    /// the height of the block being built (`height() + 1`).
    pub fn apply_transaction(&mut self, tx: &Transaction) -> Result<TxOutcome, ContractViolation> {
        self.validate_transaction(tx).map_err(ContractViolation)?;
        let tx_id = tx.tx_id();
        self.applied_txs.insert(tx_id);
        let mut effects = Vec::new();
        let (name, subject) = match &tx.payload {
            TxPayload::IssueCredential {
                document,
                stored,
                pointer,
            } => {
                let id = document.id.clone().expect("validated documents carry an id");
                self.by_revocation_key.insert(RevocationKey::of(&id), id.clone());
                self.credentials.insert(
                    id.clone(),
                    CredentialRecord {
                        issuer: tx.sender.clone(),
                        holder: document.holder().clone(),
                        content_address: stored.address,
                        sealed: stored.sealed,
                        doc_hash: document.doc_hash(),
                        pointer: pointer.clone(),
                    },
                );
                (EventName::CredentialIssued, id.to_string())
            }
            TxPayload::RevokeCredential { key } => {
                self.revoked.insert(*key);
                (EventName::CertificateRevoked, key.to_string())
            }
            TxPayload::GiveConsent { subject } => {
                self.consent.insert(subject.clone(), true);
                (EventName::ConsentGiven, subject.to_string())
            }
            TxPayload::WithdrawConsent { subject } => {
                self.consent.insert(subject.clone(), false);
                (EventName::ConsentWithdrawn, subject.to_string())
            }
            TxPayload::DeleteData { subject } => {
                for rec in self.credentials.values().filter(|r| r.holder == *subject) {
                    effects.push(Effect::EraseBlob {
                        address: rec.content_address,
                    });
                    if rec.sealed {
                        effects.push(Effect::DestroyKey {
                            address: rec.content_address,
                        });
                    }
                    if let Some(pointer) = &rec.pointer {
                        effects.push(Effect::InvalidatePointer {
                            pointer: pointer.clone(),
                        });
                    }
                }
                (EventName::DataDeleted, subject.to_string())
            }
            TxPayload::SetPermissions { user, permissions } => {
                let bits = PermissionBits::from_bits(*permissions).expect("validated bits");
                self.roles.insert(user.clone(), bits);
                (EventName::PermissionsSet, user.to_string())
            }
        };
        let event = self.push_event(tx, tx_id, name, subject, None);
        Ok(TxOutcome {
            tx_id,
            events: vec![event],
            effects,
        })
    }

    /// Records a rejected transaction in the audit trail without touching
    /// any other state.
    pub fn record_rejection(&mut self, tx: &Transaction, reason: &InvalidReason) -> AuditEvent {
        let tx_id = tx.tx_id();
        self.push_event(
            tx,
            tx_id,
            EventName::TxRejected,
            tx.sender.to_string(),
            Some(reason.code().to_string()),
        )
    }

    /// Builds the next block from `pending` against this state.
    ///
    /// Pending transactions are tried in order, repeatedly, until a full
    /// pass applies none; whatever is left is invalid against the final
    /// state and goes into `rejected`.
    pub fn build_block(&self, pending: &[Transaction], proposer: ValidatorId, timestamp: i64) -> Block {
        let mut work = self.clone();
        let mut seen = BTreeSet::new();
        let mut remaining: Vec<&Transaction> = pending.iter().filter(|tx| seen.insert(tx.tx_id())).collect();
        let mut transactions = Vec::new();
        loop {
            let before = transactions.len();
            remaining.retain(|tx| match work.apply_transaction(tx) {
                Ok(_) => {
                    transactions.push((*tx).clone());
                    false
                }
                Err(_) => true,
            });
            if transactions.len() == before {
                break;
            }
        }
        let rejected: Vec<Transaction> = remaining.into_iter().cloned().collect();
        Block {
            height: self.height + 1,
            parent_hash: self.tip_hash,
            timestamp,
            proposer,
            transactions,
            rejected,
            state_root: work.state_commitment(),
        }
    }

    /// The state after `block`, or why the block is unacceptable. `self` is
    /// left untouched.
    pub fn after_block(&self, block: &Block) -> Result<(LedgerState, BlockOutcome), BlockError> {
        if block.height != self.height + 1 {
            return Err(BlockError::WrongHeight {
                expected: self.height + 1,
                got: block.height,
            });
        }
        if block.parent_hash != self.tip_hash {
            return Err(BlockError::WrongParent);
        }
        let mut work = self.clone();
        let mut outcome = BlockOutcome::default();
        for (index, tx) in block.transactions.iter().enumerate() {
            let applied = work
                .apply_transaction(tx)
                .map_err(|ContractViolation(reason)| BlockError::InvalidTransaction { index, reason })?;
            outcome.events.extend(applied.events.iter().cloned());
            outcome.effects.extend(applied.effects.iter().cloned());
            outcome.applied.push(applied);
        }
        for (index, tx) in block.rejected.iter().enumerate() {
            let reason = match work.validate_transaction(tx) {
                Ok(()) => return Err(BlockError::FalselyRejected { index }),
                Err(reason) => reason,
            };
            outcome.events.push(work.record_rejection(tx, &reason));
            outcome.rejected.push((tx.tx_id(), reason));
        }
        work.state_root = work.state_commitment();
        if work.state_root != block.state_root {
            return Err(BlockError::StateRootMismatch);
        }
        work.height = block.height;
        work.tip_hash = block.hash();
        Ok((work, outcome))
    }

    pub fn check_block(&self, block: &Block) -> Result<(), BlockError> {
        self.after_block(block).map(|_| ())
    }

    /// Applies `block` atomically: on error nothing changes.
    pub fn apply_block(&mut self, block: &Block) -> Result<BlockOutcome, BlockError> {
        let (next, outcome) = self.after_block(block)?;
        *self = next;
        Ok(outcome)
    }

    /// Checks a credential against this state. The outcome is the first
    /// that applies of: malformed, unknown issuer, invalid signature,
    /// revoked, expired or not yet valid, valid.
    pub fn verify_credential(&self, doc: &CredentialDocument, now: DateTime<Utc>) -> VerificationOutcome {
        let (Some(id), Some(proof)) = (&doc.id, &doc.proof) else {
            return VerificationOutcome::Malformed;
        };
        if parse_value(&doc.to_json()).is_err() {
            return VerificationOutcome::Malformed;
        }
        let message = canonicalize(doc, true);
        let key = match proof.verification_method.as_deref() {
            Some(vm) => match self.keys.get(vm) {
                Some(k) => k,
                None => return VerificationOutcome::UnknownIssuer,
            },
            None => {
                let mut candidates = self.keys.values().filter(|k| k.controls_issuer(&doc.issuer)).peekable();
                if candidates.peek().is_none() {
                    return VerificationOutcome::UnknownIssuer;
                }
                match candidates.find(|k| verify(&message, proof, &k.public_key)) {
                    Some(k) => k,
                    None => return VerificationOutcome::InvalidSignature,
                }
            }
        };
        if !key.controls_issuer(&doc.issuer) || !proof_matches(key, proof) || !verify(&message, proof, &key.public_key) {
            return VerificationOutcome::InvalidSignature;
        }
        // A validly signed document that differs from the recorded
        // issuance is not the registered credential.
        if self.credentials.get(id).is_some_and(|rec| rec.doc_hash != doc.doc_hash()) {
            return VerificationOutcome::InvalidSignature;
        }
        if self.is_revoked(&RevocationKey::of(id)) {
            return VerificationOutcome::Revoked;
        }
        match temporal_status(doc, now) {
            ValidityStatus::Valid => VerificationOutcome::Valid,
            ValidityStatus::Expired => VerificationOutcome::Expired,
            ValidityStatus::NotYetValid => VerificationOutcome::NotYetValid,
        }
    }

    /// As [`LedgerState::verify_credential`] on raw JSON; unparsable or
    /// schema-violating input is `Malformed`.
    pub fn verify_credential_json(&self, raw: &[u8], now: DateTime<Utc>) -> VerificationOutcome {
        match crate::credential::validate_document(raw) {
            Ok(doc) => self.verify_credential(&doc, now),
            Err(_) => VerificationOutcome::Malformed,
        }
    }
}

fn proof_matches(key: &RegisteredKey, proof: &Proof) -> bool {
    proof.proof_type.algorithm() == Some(key.algorithm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credential::{validate_issue_request, IsoInstant};
    use crate::crypto::{content_hash, generate_keypair, sign, KeyPair};
    use crate::ledger::Participant;
    use crate::store::StoredRef;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct World {
        rng: ChaCha20Rng,
        admin: (Did, KeyPair),
        issuer: (Did, KeyPair),
        student: (Did, KeyPair),
        state: LedgerState,
        nonce: u64,
    }

    const T0: i64 = 1_650_000_000;

    fn world() -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut party = |did: &str, alg| {
            let did: Did = did.parse().unwrap();
            let key = generate_keypair(alg, format!("{did}#key-1"), &mut rng);
            (did, key)
        };
        let admin = party("did:example:admin", Algorithm::Ed25519);
        let issuer = party("did:example:456", Algorithm::Es256);
        let student = party("did:example:abcdef", Algorithm::Ed25519);
        let mut genesis = Genesis::new("test", admin.0.clone());
        genesis.participants = vec![
            Participant::from_keypair(admin.0.clone(), &admin.1, None),
            Participant::from_keypair(issuer.0.clone(), &issuer.1, Some("https://university.example.edu".into())),
            Participant::from_keypair(student.0.clone(), &student.1, None),
        ];
        genesis.roles.insert(issuer.0.clone(), 0b0011);
        let state = LedgerState::from_genesis(&genesis).unwrap();
        World {
            rng,
            admin,
            issuer,
            student,
            state,
            nonce: 0,
        }
    }

    impl World {
        fn tx(&mut self, who: &(Did, KeyPair), payload: TxPayload) -> Transaction {
            self.nonce += 1;
            Transaction::signed(who.0.clone(), T0 + self.nonce as i64, self.nonce, payload, &who.1)
        }

        fn signed_doc(&mut self) -> CredentialDocument {
            let req = validate_issue_request(
                r#"{"issuer":"https://university.example.edu","recipient":{"id":"did:example:abcdef","name":"Juan Pérez"},"credential":{"type":"Diploma","course":"MSc Computer Science"}}"#.as_bytes(),
            )
            .unwrap();
            let id = CredentialId::generate(&mut self.rng);
            let mut doc = req
                .into_document(id, IsoInstant::parse("2021-05-01").unwrap())
                .unwrap();
            doc.expiration_date = IsoInstant::parse("2026-05-01");
            let created = DateTime::from_timestamp(T0, 0).unwrap();
            doc.proof = Some(sign(&canonicalize(&doc, true), &self.issuer.1, created));
            doc
        }

        fn issue_tx(&mut self, doc: &CredentialDocument) -> Transaction {
            let stored = StoredRef {
                address: content_hash(&canonicalize(doc, false)),
                sealed: false,
            };
            let issuer = (self.issuer.0.clone(), self.issuer.1.clone());
            self.tx(
                &issuer,
                TxPayload::IssueCredential {
                    document: doc.clone(),
                    stored,
                    pointer: None,
                },
            )
        }
    }

    fn now() -> DateTime<Utc> {
        "2022-01-01T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn issue_verify_revoke() {
        let mut w = world();
        let doc = w.signed_doc();
        let tx = w.issue_tx(&doc);
        assert_eq!(w.state.validate_transaction(&tx), Ok(()));
        w.state.apply_transaction(&tx).unwrap();
        assert_eq!(w.state.verify_credential(&doc, now()), VerificationOutcome::Valid);
        let dup = w.issue_tx(&doc);
        assert_eq!(w.state.validate_transaction(&dup), Err(InvalidReason::DuplicateId));

        let key = RevocationKey::of(doc.id.as_ref().unwrap());
        assert!(!w.state.is_revoked(&key));
        let issuer = (w.issuer.0.clone(), w.issuer.1.clone());
        let revoke = w.tx(&issuer, TxPayload::RevokeCredential { key });
        let out = w.state.apply_transaction(&revoke).unwrap();
        assert_eq!(out.events[0].event_name, EventName::CertificateRevoked);
        assert_eq!(out.events[0].subject, key.to_string());
        assert!(w.state.is_revoked(&key));
        assert_eq!(w.state.verify_credential(&doc, now()), VerificationOutcome::Revoked);
        let again = w.tx(&issuer, TxPayload::RevokeCredential { key });
        assert_eq!(w.state.validate_transaction(&again), Err(InvalidReason::AlreadyRevoked));
    }

    #[test]
    fn replayed_transaction_is_rejected() {
        let mut w = world();
        let student = (w.student.0.clone(), w.student.1.clone());
        let give = w.tx(&student, TxPayload::GiveConsent { subject: student.0.clone() });
        w.state.apply_transaction(&give).unwrap();
        assert_eq!(w.state.validate_transaction(&give), Err(InvalidReason::DuplicateTransaction));
    }

    #[test]
    fn forged_and_unregistered_senders() {
        let mut w = world();
        let student = (w.student.0.clone(), w.student.1.clone());
        let mut forged = w.tx(&student, TxPayload::GiveConsent { subject: student.0.clone() });
        forged.sender = w.admin.0.clone();
        assert_eq!(w.state.validate_transaction(&forged), Err(InvalidReason::BadSignature));

        let stranger_key = generate_keypair(Algorithm::Ed25519, "did:example:nobody#k", &mut w.rng);
        let stranger = ("did:example:nobody".parse().unwrap(), stranger_key);
        let tx = w.tx(&stranger, TxPayload::GiveConsent { subject: stranger.0.clone() });
        assert_eq!(w.state.validate_transaction(&tx), Err(InvalidReason::UnknownSender));
    }

    #[test]
    fn issuance_guards_in_order() {
        let mut w = world();
        let mut doc = w.signed_doc();
        doc.credential_subject.insert("course".into(), "MSc Tampered".into());
        let tx = w.issue_tx(&doc);
        assert_eq!(w.state.validate_transaction(&tx), Err(InvalidReason::InvalidDocumentSignature));

        let mut doc = w.signed_doc();
        doc.issuer = "https://other.example.edu".into();
        let tx = w.issue_tx(&doc);
        assert_eq!(w.state.validate_transaction(&tx), Err(InvalidReason::IssuerMismatch));

        let mut doc = w.signed_doc();
        doc.proof = None;
        let tx = w.issue_tx(&doc);
        assert!(matches!(w.state.validate_transaction(&tx), Err(InvalidReason::SchemaViolation(_))));

        let doc = w.signed_doc();
        let student = (w.student.0.clone(), w.student.1.clone());
        let tx = w.tx(
            &student,
            TxPayload::IssueCredential {
                document: doc,
                stored: StoredRef {
                    address: content_hash(b""),
                    sealed: false,
                },
                pointer: None,
            },
        );
        assert_eq!(
            w.state.validate_transaction(&tx),
            Err(InvalidReason::MissingPermission(PermissionBits::ISSUE))
        );
    }

    #[test]
    fn permissions_are_admin_only_and_bounded() {
        let mut w = world();
        let issuer = (w.issuer.0.clone(), w.issuer.1.clone());
        let admin = (w.admin.0.clone(), w.admin.1.clone());
        let user = w.student.0.clone();
        let tx = w.tx(&issuer, TxPayload::SetPermissions { user: user.clone(), permissions: 1 });
        assert_eq!(w.state.validate_transaction(&tx), Err(InvalidReason::NotAdmin));
        let tx = w.tx(&admin, TxPayload::SetPermissions { user: user.clone(), permissions: 16 });
        assert_eq!(w.state.validate_transaction(&tx), Err(InvalidReason::UnknownPermissionBits(16)));
        let tx = w.tx(&admin, TxPayload::SetPermissions { user: user.clone(), permissions: 4 });
        w.state.apply_transaction(&tx).unwrap();
        assert!(w.state.authorize_action(&user, PermissionBits::VERIFY));
        assert!(!w.state.authorize_action(&user, PermissionBits::ISSUE));
        assert!(w.state.authorize_action(&"did:example:x".parse().unwrap(), PermissionBits::NONE));
    }

    #[test]
    fn build_block_filters_and_records_rejections() {
        let mut w = world();
        let student = (w.student.0.clone(), w.student.1.clone());
        let s = student.0.clone();
        let withdraw = w.tx(&student, TxPayload::WithdrawConsent { subject: s.clone() });
        let give = w.tx(&student, TxPayload::GiveConsent { subject: s.clone() });
        let delete = w.tx(&student, TxPayload::DeleteData { subject: s.clone() });
        let doc = w.signed_doc();
        let issue = w.issue_tx(&doc);
        let pending = vec![withdraw.clone(), give.clone(), delete.clone(), issue.clone()];
        let block = w.state.build_block(&pending, ValidatorId(0), T0);
        // Withdraw only becomes valid once give lands, and delete once withdraw does.
        assert_eq!(block.transactions, vec![give.clone(), issue, withdraw, delete]);
        assert!(block.rejected.is_empty());
        let out = w.state.apply_block(&block).unwrap();
        assert_eq!(out.events.len(), 4);
        assert_eq!(w.state.height(), 1);
        assert_eq!(w.state.tip_hash(), block.hash());
    }

    #[test]
    fn invalid_pending_transactions_become_rejections() {
        let mut w = world();
        let student = (w.student.0.clone(), w.student.1.clone());
        let s = student.0.clone();
        let give = w.tx(&student, TxPayload::GiveConsent { subject: s.clone() });
        let delete = w.tx(&student, TxPayload::DeleteData { subject: s.clone() });
        let block = w.state.build_block(&[give.clone(), delete.clone()], ValidatorId(0), T0);
        assert_eq!(block.transactions, vec![give]);
        assert_eq!(block.rejected, vec![delete.clone()]);
        let out = w.state.apply_block(&block).unwrap();
        assert_eq!(out.rejected, vec![(delete.tx_id(), InvalidReason::ConsentStillGiven)]);
        let last = w.state.audit_log().last().unwrap();
        assert_eq!(last.event_name, EventName::TxRejected);
        assert_eq!(last.detail.as_deref(), Some("ConsentStillGiven"));
        assert_eq!(w.state.audit_log().len(), 2);
    }

    #[test]
    fn tampered_block_is_refused_atomically() {
        let mut w = world();
        let student = (w.student.0.clone(), w.student.1.clone());
        let s = student.0.clone();
        let give = w.tx(&student, TxPayload::GiveConsent { subject: s.clone() });
        let mut block = w.state.build_block(&[give], ValidatorId(0), T0);
        block.state_root = Hash32::ZERO;
        let before = w.state.audit_log().len();
        assert_eq!(w.state.apply_block(&block), Err(BlockError::StateRootMismatch));
        assert_eq!(w.state.audit_log().len(), before);
        assert_eq!(w.state.height(), 0);
    }
}
