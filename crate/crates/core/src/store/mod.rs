//! Content-addressed off-chain blob storage.
//!
//! Blobs are keyed by the SHA-256 of their bytes and every read re-hashes
//! what it returns, so a successful [`BlobStore::get`] is self-certifying.
//! Erased blobs are gone for good; the ledger keeps only their address.

mod disk;
mod memory;
mod pointer;

pub use disk::DiskStore;
pub use memory::MemoryStore;
pub use pointer::{PointerTable, PointerTarget};

use serde::{Deserialize, Serialize};

use crate::crypto::{ContentAddress, SealedPayload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StoredRef {
    pub address: ContentAddress,
    pub sealed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("blob {0} not found")]
    NotFound(ContentAddress),
    #[error("store is full ({capacity} bytes)")]
    StorageFull { capacity: usize },
    #[error("blob {0} failed its integrity check")]
    IntegrityError(ContentAddress),
    #[error("unknown pointer {0}")]
    UnknownPointer(String),
    #[error("stored blob {0} is not a sealed payload")]
    NotSealed(ContentAddress),
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
}

pub trait BlobStore: Send + Sync {
    /// Stores `content` under its hash. Re-putting identical bytes is a no-op.
    fn put(&self, content: &[u8]) -> Result<StoredRef, StoreError>;

    /// Returns the exact stored bytes after checking them against `address`.
    fn get(&self, address: &ContentAddress) -> Result<Vec<u8>, StoreError>;

    /// Destroys the blob. A second erase of the same address is `NotFound`.
    fn erase(&self, address: &ContentAddress) -> Result<(), StoreError>;

    fn contains(&self, address: &ContentAddress) -> bool;

    fn put_sealed(&self, payload: &SealedPayload) -> Result<StoredRef, StoreError> {
        let stored = self.put(&payload.to_bytes())?;
        Ok(StoredRef {
            sealed: true,
            ..stored
        })
    }

    fn get_sealed(&self, address: &ContentAddress) -> Result<SealedPayload, StoreError> {
        let bytes = self.get(address)?;
        SealedPayload::from_bytes(&bytes).map_err(|_| StoreError::NotSealed(*address))
    }
}
