//! Core of the BACIP credential registry node.
//!
//! The crate is organised bottom-up:
//!
//! * [`credential`]: the credential document model, identifiers, schema
//!   validation, canonical serialization and temporal validity.
//! * [`crypto`]: ES256 / Ed25519 signatures, AES-256-GCM sealing, SHA-256
//!   content addressing and the passphrase-protected keystore.
//! * [`store`]: the content-addressed blob store and mutable pointers.
//! * [`merkle`]: the binary Merkle tree shared by the ledger commitment and
//!   the public anchors.
//! * [`ledger`]: the deterministic replicated state machine (issuance,
//!   revocation, consent, permissions, audit trail) and its journal.
//! * [`consensus`]: the IBFT automaton, the deterministic network simulator
//!   and an in-process validator cluster.
//! * [`anchor`]: the public anchor log and inclusion proofs.
//! * [`node`]: glue that runs finalized blocks through the ledger, the blob
//!   store and the anchor log.
//! * [`workload`]: a seeded generator of participants and transactions.

pub mod anchor;
pub mod canonical;
pub mod consensus;
pub mod credential;
pub mod crypto;
pub mod ledger;
pub mod merkle;
pub mod node;
pub mod store;
pub mod workload;

pub use crypto::hash::{content_hash, ContentAddress, Hash32};
