//! Mutable pointers to blobs.
//!
//! A pointer either targets a content address or has been invalidated.
//! Invalidation is permanent. The table is backed by an append-only
//! JSON-lines journal, one `{"pointerId": .., "target": "<hex>" | "INVALIDATED"}`
//! record per change.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::credential::PointerId;
use crate::crypto::ContentAddress;

const INVALIDATED: &str = "INVALIDATED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointerTarget {
    Address(ContentAddress),
    Invalidated,
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    #[serde(rename = "pointerId")]
    pointer_id: PointerId,
    target: String,
}

#[derive(Default)]
pub struct PointerTable {
    entries: RwLock<HashMap<PointerId, PointerTarget>>,
    journal: Option<Mutex<PathBuf>>,
}

impl PointerTable {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a journal-backed table and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for (n, line) in fs::read_to_string(&path)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: JournalLine = serde_json::from_str(line).map_err(|e| {
                    StoreError::Io(std::io::Error::other(format!("pointer journal line {}: {e}", n + 1)))
                })?;
                let target = if rec.target == INVALIDATED {
                    PointerTarget::Invalidated
                } else {
                    PointerTarget::Address(rec.target.parse().map_err(|_| {
                        StoreError::Io(std::io::Error::other(format!(
                            "pointer journal line {}: bad address",
                            n + 1
                        )))
                    })?)
                };
                // Replay honours monotonicity even if the journal was tampered with.
                let slot = entries.entry(rec.pointer_id).or_insert(target);
                if *slot != PointerTarget::Invalidated {
                    *slot = target;
                }
            }
        }
        Ok(PointerTable {
            entries: RwLock::new(entries),
            journal: Some(Mutex::new(path)),
        })
    }

    fn append(&self, id: &PointerId, target: PointerTarget) -> Result<(), StoreError> {
        let Some(journal) = &self.journal else {
            return Ok(());
        };
        let path = journal.lock().unwrap();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let line = JournalLine {
            pointer_id: id.clone(),
            target: match target {
                PointerTarget::Address(a) => a.to_hex(),
                PointerTarget::Invalidated => INVALIDATED.to_string(),
            },
        };
        let mut file = OpenOptions::new().create(true).append(true).open(&*path)?;
        writeln!(file, "{}", serde_json::to_string(&line).expect("journal lines serialize"))?;
        Ok(())
    }

    /// Creates a pointer to `address`. Re-creating an existing id is refused
    /// once it has been invalidated; otherwise the target is left unchanged.
    pub fn create(&self, id: PointerId, address: ContentAddress) -> Result<(), StoreError> {
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(&id) {
            return Ok(());
        }
        self.append(&id, PointerTarget::Address(address))?;
        entries.insert(id, PointerTarget::Address(address));
        Ok(())
    }

    pub fn resolve(&self, id: &PointerId) -> Result<PointerTarget, StoreError> {
        self.entries
            .read()
            .unwrap()
            .get(id)
            .copied()
            .ok_or_else(|| StoreError::UnknownPointer(id.to_string()))
    }

    pub fn invalidate(&self, id: &PointerId) -> Result<(), StoreError> {
        let mut entries = self.entries.write().unwrap();
        let slot = entries
            .get_mut(id)
            .ok_or_else(|| StoreError::UnknownPointer(id.to_string()))?;
        if *slot != PointerTarget::Invalidated {
            self.append(id, PointerTarget::Invalidated)?;
            *slot = PointerTarget::Invalidated;
        }
        Ok(())
    }

    pub fn invalidated_count(&self) -> usize {
        self.entries
            .read()
            .unwrap()
            .values()
            .filter(|t| **t == PointerTarget::Invalidated)
            .count()
    }
}
