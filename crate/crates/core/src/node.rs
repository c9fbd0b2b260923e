//! A registry node: the finalization pipeline that connects consensus to the
//! journal, off-chain storage, the keystore and the public anchor log.
//!
//! Writers are serialized by the cluster lock. Readers take an immutable
//! [`LedgerState`] snapshot, which is replaced only after a block has been
//! journaled, its effects applied and its anchor published.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use rand::rngs::OsRng;
use rand::RngCore;

use crate::anchor::{build_inclusion_proof, AnchorError, AnchorLog, InclusionProof, PublicAnchor};
use crate::consensus::{ConsensusUnavailable, InProcessCluster};
use crate::credential::{canonicalize, CredentialDocument, CredentialId, Did, DocumentError, IsoInstant, IssueRequest, PointerId};
use crate::crypto::{
    decrypt_payload, encrypt_payload, sign, CryptoError, Hash32, KeyPair, KeyStore, KeystoreError, KEY_LEN,
};
use crate::ledger::{
    replay, AuditEvent, Block, Effect, Genesis, GenesisError, InvalidReason, Journal, JournalError, LedgerState,
    RevocationKey, Transaction, TxOutcome, TxPayload, VerificationOutcome,
};
use crate::store::{BlobStore, PointerTable, StoreError, StoredRef};

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error(transparent)]
    Consensus(#[from] ConsensusUnavailable),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("transaction rejected: {}", .0.code())]
    Rejected(InvalidReason),
    #[error("no signing key held for {0}")]
    NoSigningKey(String),
    #[error("finalized block {0} does not apply to the local state")]
    Divergence(u64),
}

impl NodeError {
    pub fn rejection(&self) -> Option<&InvalidReason> {
        match self {
            NodeError::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

/// Everything a node is assembled from.
pub struct NodeComponents {
    pub genesis: Genesis,
    /// Size of the in-process validator set.
    pub validators: usize,
    pub validator_seed: u64,
    pub store: Arc<dyn BlobStore>,
    pub pointers: PointerTable,
    pub keystore: KeyStore,
    pub anchors: AnchorLog,
    pub journal: Option<Journal>,
}

/// What one [`RegistryNode::submit`] call finalized.
#[derive(Debug, Default)]
pub struct SubmitReport {
    pub blocks: Vec<Arc<Block>>,
    pub applied: BTreeMap<Hash32, TxOutcome>,
    pub rejected: BTreeMap<Hash32, InvalidReason>,
    pub anchors: Vec<PublicAnchor>,
    /// Off-chain effects that could not be carried out.
    pub effect_failures: Vec<String>,
}

impl SubmitReport {
    /// The outcome of `tx`: its events, or why it was rejected.
    pub fn outcome(&self, tx: &Transaction) -> Result<&TxOutcome, NodeError> {
        let id = tx.tx_id();
        if let Some(o) = self.applied.get(&id) {
            return Ok(o);
        }
        let reason = self.rejected.get(&id).cloned().unwrap_or(InvalidReason::UnknownCredential);
        Err(NodeError::Rejected(reason))
    }
}

#[derive(Debug, Clone)]
pub struct IssuedCredential {
    pub document: CredentialDocument,
    pub stored: StoredRef,
    pub pointer: PointerId,
    pub tx_id: Hash32,
    pub height: u64,
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsentAction {
    Give,
    Withdraw,
    Delete,
}

pub struct RegistryNode {
    genesis: Genesis,
    snapshot: RwLock<Arc<LedgerState>>,
    cluster: Mutex<InProcessCluster>,
    store: Arc<dyn BlobStore>,
    pointers: PointerTable,
    keystore: Mutex<KeyStore>,
    anchors: RwLock<AnchorLog>,
    journal: Option<Journal>,
    nonce: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

impl RegistryNode {
    /// Replays the journal, if any, and anchors every journaled block the
    /// anchor log has not seen yet.
    pub fn new(components: NodeComponents) -> Result<Self, NodeError> {
        let NodeComponents {
            genesis,
            validators,
            validator_seed,
            store,
            pointers,
            keystore,
            mut anchors,
            journal,
        } = components;
        let mut state = LedgerState::from_genesis(&genesis)?;
        if let Some(journal) = &journal {
            let blocks = journal.blocks()?;
            let last_anchored = anchors.latest().map_or(0, |a| a.private_height);
            for block in &blocks {
                state.apply_block(block).map_err(|source| JournalError::Replay {
                    height: block.height,
                    source,
                })?;
                if block.height > last_anchored {
                    anchors.anchor_block(block, &state)?;
                }
            }
        }
        let nonce = state.audit_log().len() as u64;
        let cluster = InProcessCluster::new(state.clone(), validators.max(1), validator_seed);
        Ok(RegistryNode {
            genesis,
            snapshot: RwLock::new(Arc::new(state)),
            cluster: Mutex::new(cluster),
            store,
            pointers,
            keystore: Mutex::new(keystore),
            anchors: RwLock::new(anchors),
            journal,
            nonce: AtomicU64::new(nonce),
        })
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn state(&self) -> Arc<LedgerState> {
        self.snapshot.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn store(&self) -> &dyn BlobStore {
        self.store.as_ref()
    }

    pub fn pointers(&self) -> &PointerTable {
        &self.pointers
    }

    /// Runs `f` with exclusive access to the keystore.
    pub fn with_keystore<R>(&self, f: impl FnOnce(&mut KeyStore) -> R) -> R {
        f(&mut lock(&self.keystore))
    }

    pub fn anchor(&self, index: u64) -> Option<PublicAnchor> {
        self.anchors.read().unwrap_or_else(PoisonError::into_inner).get(index).cloned()
    }

    pub fn anchors(&self) -> Vec<PublicAnchor> {
        self.anchors.read().unwrap_or_else(PoisonError::into_inner).anchors().to_vec()
    }

    pub fn set_validator_online(&self, index: usize, online: bool) {
        lock(&self.cluster).set_online(index, online);
    }

    /// Orders `txs` through consensus and runs every finalized block through
    /// the pipeline.
    pub fn submit(&self, txs: Vec<Transaction>, now: DateTime<Utc>) -> Result<SubmitReport, NodeError> {
        let mut cluster = lock(&self.cluster);
        let finalized = cluster.submit(txs, now.timestamp())?;
        let mut state = LedgerState::clone(&self.state());
        let mut report = SubmitReport::default();
        for f in finalized {
            state
                .apply_block(&f.block)
                .map_err(|_| NodeError::Divergence(f.block.height))?;
            if let Some(journal) = &self.journal {
                journal.append(&f.block)?;
            }
            for effect in &f.outcome.effects {
                if let Err(e) = self.apply_effect(effect) {
                    report.effect_failures.push(format!("{effect:?}: {e}"));
                }
            }
            let anchor = self
                .anchors
                .write()
                .unwrap_or_else(PoisonError::into_inner)
                .anchor_block(&f.block, &state)?;
            report.anchors.push(anchor);
            for outcome in f.outcome.applied {
                report.applied.insert(outcome.tx_id, outcome);
            }
            report.rejected.extend(f.outcome.rejected);
            report.blocks.push(f.block);
            *self.snapshot.write().unwrap_or_else(PoisonError::into_inner) = Arc::new(state.clone());
        }
        Ok(report)
    }

    fn apply_effect(&self, effect: &Effect) -> Result<(), NodeError> {
        match effect {
            Effect::EraseBlob { address } => match self.store.erase(address) {
                Ok(()) | Err(StoreError::NotFound(_)) => Ok(()),
                Err(e) => Err(e.into()),
            },
            Effect::DestroyKey { address } => {
                let mut ks = lock(&self.keystore);
                if ks.destroy_blob_key(address) {
                    ks.save()?;
                }
                Ok(())
            }
            Effect::InvalidatePointer { pointer } => match self.pointers.invalidate(pointer) {
                Ok(()) | Err(StoreError::UnknownPointer(_)) => Ok(()),
                Err(e) => Err(e.into()),
            },
        }
    }

    /// A registered key of `did` whose secret this node holds.
    pub fn signer_for(&self, did: &Did) -> Result<KeyPair, NodeError> {
        let state = self.state();
        let mut ks = lock(&self.keystore);
        let key_id = state
            .keys()
            .filter(|k| k.did == *did)
            .map(|k| k.key_id.clone())
            .find(|id| ks.contains(id))
            .ok_or_else(|| NodeError::NoSigningKey(did.to_string()))?;
        Ok(ks.keypair(&key_id)?)
    }

    pub fn sign_tx(&self, sender: &Did, payload: TxPayload, now: DateTime<Utc>) -> Result<Transaction, NodeError> {
        let key = self.signer_for(sender)?;
        let nonce = self.nonce.fetch_add(1, Ordering::Relaxed) + 1;
        Ok(Transaction::signed(sender.clone(), now.timestamp(), nonce, payload, &key))
    }

    fn submit_one(&self, tx: Transaction, now: DateTime<Utc>) -> Result<(TxOutcome, u64), NodeError> {
        let report = self.submit(vec![tx.clone()], now)?;
        let outcome = report.outcome(&tx)?.clone();
        let height = outcome.events.first().map_or(0, |e| e.height);
        Ok((outcome, height))
    }

    /// Seals `plaintext` under a fresh key held in the keystore and stores
    /// the ciphertext.
    pub fn seal_and_store(&self, plaintext: &[u8]) -> Result<StoredRef, NodeError> {
        let mut key = zeroize::Zeroizing::new([0u8; KEY_LEN]);
        OsRng.fill_bytes(key.as_mut());
        let sealed = encrypt_payload(plaintext, key.as_ref(), &mut OsRng)?;
        let stored = self.store.put_sealed(&sealed)?;
        let mut ks = lock(&self.keystore);
        ks.insert_blob_key(&stored.address, &key, &mut OsRng);
        ks.save()?;
        Ok(stored)
    }

    /// Reads a blob back, opening it if it was sealed by this node.
    pub fn fetch(&self, stored: &StoredRef) -> Result<Vec<u8>, NodeError> {
        if !stored.sealed {
            return Ok(self.store.get(&stored.address)?);
        }
        let sealed = self.store.get_sealed(&stored.address)?;
        let key = lock(&self.keystore)
            .blob_key(&stored.address)
            .ok_or(NodeError::Crypto(CryptoError::AuthFailure))?;
        Ok(decrypt_payload(&sealed, key.as_ref())?)
    }

    fn discard_blob(&self, stored: &StoredRef) {
        let _ = self.store.erase(&stored.address);
        lock(&self.keystore).destroy_blob_key(&stored.address);
    }

    /// Builds, signs, stores and registers a credential for `request`.
    /// `issuer` must hold ISSUE permission and a key for the request's
    /// issuer URI.
    pub fn issue(
        &self,
        request: IssueRequest,
        issuer: &Did,
        seal: bool,
        now: DateTime<Utc>,
    ) -> Result<IssuedCredential, NodeError> {
        let key = self.signer_for(issuer)?;
        let id = CredentialId::generate(&mut OsRng);
        let mut document = request.into_document(id, IsoInstant::date_of(now))?;
        document.proof = Some(sign(&canonicalize(&document, true), &key, now));

        let bytes = canonicalize(&document, false);
        let stored = if seal { self.seal_and_store(&bytes)? } else { self.store.put(&bytes)? };
        let pointer = PointerId::generate(&mut OsRng);
        self.pointers.create(pointer.clone(), stored.address)?;

        let payload = TxPayload::IssueCredential {
            document: document.clone(),
            stored,
            pointer: Some(pointer.clone()),
        };
        let tx = self.sign_tx(issuer, payload, now)?;
        let tx_id = tx.tx_id();
        match self.submit_one(tx, now) {
            Ok((outcome, height)) => Ok(IssuedCredential {
                document,
                stored,
                pointer,
                tx_id,
                height,
                events: outcome.events,
            }),
            Err(e) => {
                self.discard_blob(&stored);
                let _ = self.pointers.invalidate(&pointer);
                Err(e)
            }
        }
    }

    pub fn revoke(&self, id: &CredentialId, revoker: &Did, now: DateTime<Utc>) -> Result<TxOutcome, NodeError> {
        let payload = TxPayload::RevokeCredential {
            key: RevocationKey::of(id),
        };
        let tx = self.sign_tx(revoker, payload, now)?;
        Ok(self.submit_one(tx, now)?.0)
    }

    pub fn consent(&self, subject: &Did, action: ConsentAction, now: DateTime<Utc>) -> Result<TxOutcome, NodeError> {
        let subject_field = subject.clone();
        let payload = match action {
            ConsentAction::Give => TxPayload::GiveConsent { subject: subject_field },
            ConsentAction::Withdraw => TxPayload::WithdrawConsent { subject: subject_field },
            ConsentAction::Delete => TxPayload::DeleteData { subject: subject_field },
        };
        let tx = self.sign_tx(subject, payload, now)?;
        Ok(self.submit_one(tx, now)?.0)
    }

    pub fn set_permissions(&self, admin: &Did, user: &Did, bits: u32, now: DateTime<Utc>) -> Result<TxOutcome, NodeError> {
        let payload = TxPayload::SetPermissions {
            user: user.clone(),
            permissions: bits,
        };
        let tx = self.sign_tx(admin, payload, now)?;
        Ok(self.submit_one(tx, now)?.0)
    }

    pub fn verify_json(&self, raw: &[u8], now: DateTime<Utc>) -> VerificationOutcome {
        self.state().verify_credential_json(raw, now)
    }

    /// Inclusion proof of `id` together with the anchor it verifies against.
    pub fn inclusion_proof(&self, id: &CredentialId) -> Result<(InclusionProof, PublicAnchor), NodeError> {
        // Holding the cluster lock keeps state and anchor log in step.
        let _writer = lock(&self.cluster);
        let state = self.state();
        let anchor = self
            .anchors
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .latest()
            .cloned()
            .ok_or(AnchorError::NoAnchor)?;
        let proof = build_inclusion_proof(&state, id, anchor.anchor_index)?;
        Ok((proof, anchor))
    }

    /// Rebuilds the state from the journal alone.
    pub fn replay_journal(&self) -> Result<LedgerState, NodeError> {
        let blocks = match &self.journal {
            Some(j) => j.blocks()?,
            None => Vec::new(),
        };
        Ok(replay(&self.genesis, &blocks)?)
    }
}
