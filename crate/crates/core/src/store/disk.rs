use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{BlobStore, StoreError, StoredRef};
use crate::crypto::{content_hash, ContentAddress};

/// One file per blob at `<root>/<first 2 hex>/<remaining 62 hex>`.
pub struct DiskStore {
    root: PathBuf,
    // put and erase are serialized so an erase can never be undone by a
    // concurrent put of stale bytes.
    writes: Mutex<()>,
}

impl DiskStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(DiskStore {
            root,
            writes: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn blob_path(&self, address: &ContentAddress) -> PathBuf {
        let hex = address.to_hex();
        self.root.join(&hex[..2]).join(&hex[2..])
    }
}

impl BlobStore for DiskStore {
    fn put(&self, content: &[u8]) -> Result<StoredRef, StoreError> {
        let address = content_hash(content);
        let _guard = self.writes.lock().unwrap();
        let path = self.blob_path(&address);
        if !path.exists() {
            let dir = path.parent().expect("blob paths have a fan-out parent");
            fs::create_dir_all(dir)?;
            let tmp = dir.join(format!(".{}.tmp", &address.to_hex()[2..]));
            let mut file = fs::File::create(&tmp)?;
            file.write_all(content)?;
            file.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(StoredRef {
            address,
            sealed: false,
        })
    }

    fn get(&self, address: &ContentAddress) -> Result<Vec<u8>, StoreError> {
        let bytes = match fs::read(self.blob_path(address)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(*address))
            }
            Err(e) => return Err(e.into()),
        };
        if content_hash(&bytes) != *address {
            return Err(StoreError::IntegrityError(*address));
        }
        Ok(bytes)
    }

    fn erase(&self, address: &ContentAddress) -> Result<(), StoreError> {
        let _guard = self.writes.lock().unwrap();
        let path = self.blob_path(address);
        match fs::metadata(&path) {
            Ok(meta) => {
                // Overwrite before unlinking so the bytes do not linger in the file.
                let mut file = fs::OpenOptions::new().write(true).open(&path)?;
                file.write_all(&vec![0u8; meta.len() as usize])?;
                file.sync_all()?;
                drop(file);
                fs::remove_file(&path)?;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(*address)),
            Err(e) => Err(e.into()),
        }
    }

    fn contains(&self, address: &ContentAddress) -> bool {
        self.blob_path(address).exists()
    }
}
