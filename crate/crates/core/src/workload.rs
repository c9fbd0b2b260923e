//! Seeded synthetic workload: a genesis with an administrator, one issuer
//! and a set of students, plus a stream of signed transactions. A fraction
//! of the stream is deliberately invalid against any state (double revokes,
//! withdrawals without consent), so rejection paths are exercised too.
//!
//! The same seed always yields the same genesis and the same stream.

use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::credential::{canonicalize, validate_issue_request, CredentialDocument, CredentialId, Did, IsoInstant};
use crate::crypto::{generate_keypair, sign, Algorithm, KeyPair};
use crate::ledger::{Genesis, Participant, PermissionBits, RevocationKey, Transaction, TxPayload};
use crate::store::StoredRef;
use crate::content_hash;

pub const ISSUER_URI: &str = "https://university.example.edu";
pub const BASE_TIMESTAMP: i64 = 1_650_000_000;

pub struct Party {
    pub did: Did,
    pub key: KeyPair,
}

impl Party {
    fn generate(did: &str, rng: &mut ChaCha20Rng) -> Self {
        let did: Did = did.parse().expect("static DID");
        let key = generate_keypair(Algorithm::Ed25519, format!("{did}#key-1"), rng);
        Party { did, key }
    }
}

pub struct Workload {
    rng: ChaCha20Rng,
    pub genesis: Genesis,
    pub admin: Party,
    pub issuer: Party,
    pub students: Vec<Party>,
    issued: Vec<CredentialId>,
    nonce: u64,
}

impl Workload {
    pub fn new(seed: u64, students: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let admin = Party::generate("did:example:admin", &mut rng);
        let issuer = Party::generate("did:example:issuer", &mut rng);
        let students: Vec<Party> = (0..students.max(1))
            .map(|i| Party::generate(&format!("did:example:student{i}"), &mut rng))
            .collect();
        let mut genesis = Genesis::new(format!("workload-{seed}"), admin.did.clone());
        genesis.participants.push(Participant::from_keypair(admin.did.clone(), &admin.key, None));
        genesis
            .participants
            .push(Participant::from_keypair(issuer.did.clone(), &issuer.key, Some(ISSUER_URI.into())));
        for s in &students {
            genesis.participants.push(Participant::from_keypair(s.did.clone(), &s.key, None));
        }
        genesis
            .roles
            .insert(issuer.did.clone(), (PermissionBits::ISSUE | PermissionBits::REVOKE).bits());
        Workload {
            rng,
            genesis,
            admin,
            issuer,
            students,
            issued: Vec::new(),
            nonce: 0,
        }
    }

    /// The issuer-signed credential for student `index`.
    pub fn credential_for(&mut self, index: usize) -> CredentialDocument {
        let student = &self.students[index % self.students.len()];
        let raw = serde_json::json!({
            "issuer": ISSUER_URI,
            "recipient": {"id": student.did.to_string(), "name": format!("Student {index}")},
            "credential": {"type": "Diploma", "course": "BSc Mathematics"},
        });
        let req = validate_issue_request(raw.to_string().as_bytes()).expect("generated request is valid");
        let id = CredentialId::generate(&mut self.rng);
        let mut doc = req
            .into_document(id, IsoInstant::parse("2021-05-01").expect("static date"))
            .expect("generated document is valid");
        let created = DateTime::from_timestamp(BASE_TIMESTAMP, 0).expect("static instant");
        doc.proof = Some(sign(&canonicalize(&doc, true), &self.issuer.key, created));
        doc
    }

    fn signed(&mut self, who: Who, payload: TxPayload) -> Transaction {
        self.nonce += 1;
        let party = match who {
            Who::Admin => &self.admin,
            Who::Issuer => &self.issuer,
            Who::Student(i) => &self.students[i],
        };
        Transaction::signed(
            party.did.clone(),
            BASE_TIMESTAMP + self.nonce as i64,
            self.nonce,
            payload,
            &party.key,
        )
    }

    pub fn issue_tx(&mut self, doc: CredentialDocument) -> Transaction {
        let stored = StoredRef {
            address: content_hash(&canonicalize(&doc, false)),
            sealed: false,
        };
        if let Some(id) = &doc.id {
            self.issued.push(id.clone());
        }
        self.signed(
            Who::Issuer,
            TxPayload::IssueCredential {
                document: doc,
                stored,
                pointer: None,
            },
        )
    }

    pub fn revoke_tx(&mut self, key: RevocationKey) -> Transaction {
        self.signed(Who::Issuer, TxPayload::RevokeCredential { key })
    }

    pub fn next_tx(&mut self) -> Transaction {
        let student = self.rng.gen_range(0..self.students.len());
        let subject = self.students[student].did.clone();
        let roll = self.rng.gen_range(0..100u32);
        match roll {
            0..=34 => {
                let doc = self.credential_for(student);
                self.issue_tx(doc)
            }
            35..=49 if !self.issued.is_empty() => {
                let pick = self.rng.gen_range(0..self.issued.len());
                let key = RevocationKey::of(&self.issued[pick]);
                self.revoke_tx(key)
            }
            35..=69 => self.signed(Who::Student(student), TxPayload::GiveConsent { subject }),
            70..=84 => self.signed(Who::Student(student), TxPayload::WithdrawConsent { subject }),
            85..=94 => self.signed(Who::Student(student), TxPayload::DeleteData { subject }),
            _ => {
                let permissions = self.rng.gen_range(0..16u32);
                self.signed(
                    Who::Admin,
                    TxPayload::SetPermissions {
                        user: subject,
                        permissions,
                    },
                )
            }
        }
    }

    pub fn transactions(&mut self, count: usize) -> Vec<Transaction> {
        (0..count).map(|_| self.next_tx()).collect()
    }
}

#[derive(Clone, Copy)]
enum Who {
    Admin,
    Issuer,
    Student(usize),
}
