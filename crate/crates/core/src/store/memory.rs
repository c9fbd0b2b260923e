use std::collections::HashMap;
use std::sync::RwLock;

use super::{BlobStore, StoreError, StoredRef};
use crate::crypto::{content_hash, ContentAddress};

/// In-memory store, optionally bounded by total stored bytes.
#[derive(Default)]
pub struct MemoryStore {
    blobs: RwLock<HashMap<ContentAddress, Vec<u8>>>,
    capacity: Option<usize>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bytes: usize) -> Self {
        MemoryStore {
            blobs: RwLock::default(),
            capacity: Some(bytes),
        }
    }

    pub fn len(&self) -> usize {
        self.blobs.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlobStore for MemoryStore {
    fn put(&self, content: &[u8]) -> Result<StoredRef, StoreError> {
        let address = content_hash(content);
        let mut blobs = self.blobs.write().unwrap();
        if !blobs.contains_key(&address) {
            if let Some(capacity) = self.capacity {
                let used: usize = blobs.values().map(Vec::len).sum();
                if used + content.len() > capacity {
                    return Err(StoreError::StorageFull { capacity });
                }
            }
            blobs.insert(address, content.to_vec());
        }
        Ok(StoredRef {
            address,
            sealed: false,
        })
    }

    fn get(&self, address: &ContentAddress) -> Result<Vec<u8>, StoreError> {
        let blobs = self.blobs.read().unwrap();
        let bytes = blobs.get(address).ok_or(StoreError::NotFound(*address))?;
        if content_hash(bytes) != *address {
            return Err(StoreError::IntegrityError(*address));
        }
        Ok(bytes.clone())
    }

    fn erase(&self, address: &ContentAddress) -> Result<(), StoreError> {
        let mut blobs = self.blobs.write().unwrap();
        match blobs.remove(address) {
            Some(mut bytes) => {
                bytes.fill(0);
                Ok(())
            }
            None => Err(StoreError::NotFound(*address)),
        }
    }

    fn contains(&self, address: &ContentAddress) -> bool {
        self.blobs.read().unwrap().contains_key(address)
    }
}
