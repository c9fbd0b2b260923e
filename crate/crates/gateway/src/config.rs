//! On-disk layout of a registry node and how to open it.
//!
//! Every path is resolved against the directory of the config file, or
//! against the data directory when no file is given.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use bacip_core::anchor::AnchorLog;
use bacip_core::crypto::KeyStore;
use bacip_core::ledger::{Genesis, Journal};
use bacip_core::node::{NodeComponents, NodeError, RegistryNode};
use bacip_core::store::{DiskStore, PointerTable};

pub const DEFAULT_DATA_DIR: &str = "bacip-data";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct NodeConfig {
    pub keystore_path: PathBuf,
    pub store_root: PathBuf,
    pub pointer_path: PathBuf,
    pub ledger_journal_path: PathBuf,
    pub anchor_log_path: PathBuf,
    /// Genesis document: administrator, key registry and initial roles.
    pub genesis_path: PathBuf,
    pub gateway_bind: String,
    /// Size of the in-process validator set.
    pub validators: usize,
    pub validator_seed: u64,
    /// Seal stored credential payloads under per-blob keys.
    pub seal_payloads: bool,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            keystore_path: "keystore.json".into(),
            store_root: "blobs".into(),
            pointer_path: "pointers.json".into(),
            ledger_journal_path: "ledger.jsonl".into(),
            anchor_log_path: "anchors.jsonl".into(),
            genesis_path: "genesis.json".into(),
            gateway_bind: DEFAULT_BIND.into(),
            validators: 1,
            validator_seed: 0,
            seal_payloads: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("no genesis at {0}; register a key with `bacip keygen` first")]
    NoGenesis(PathBuf),
    #[error("invalid genesis {path}: {message}")]
    Genesis { path: PathBuf, message: String },
    #[error("validators must be at least 1")]
    NoValidators,
    #[error(transparent)]
    Node(#[from] NodeError),
}

impl NodeConfig {
    /// Reads `path` if given, otherwise uses defaults rooted at `data_dir`.
    pub fn load(path: Option<&Path>, data_dir: &Path) -> Result<Self, ConfigError> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                let cfg: NodeConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (NodeConfig::default(), data_dir.to_path_buf()),
        };
        if cfg.validators == 0 {
            return Err(ConfigError::NoValidators);
        }
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.keystore_path,
            &mut self.store_root,
            &mut self.pointer_path,
            &mut self.ledger_journal_path,
            &mut self.anchor_log_path,
            &mut self.genesis_path,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn ensure_dirs(&self) -> Result<(), ConfigError> {
        for p in [
            &self.keystore_path,
            &self.pointer_path,
            &self.ledger_journal_path,
            &self.anchor_log_path,
            &self.genesis_path,
        ] {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|source| ConfigError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
        }
        Ok(())
    }

    pub fn open_keystore(&self, passphrase: &str) -> Result<KeyStore, ConfigError> {
        self.ensure_dirs()?;
        KeyStore::open(&self.keystore_path, passphrase, &mut OsRng).map_err(|e| ConfigError::Node(e.into()))
    }

    /// `None` when no genesis has been written yet.
    pub fn read_genesis(&self) -> Result<Option<Genesis>, ConfigError> {
        if !self.genesis_path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&self.genesis_path).map_err(|source| ConfigError::Io {
            path: self.genesis_path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map(Some).map_err(|e| ConfigError::Genesis {
            path: self.genesis_path.clone(),
            message: e.to_string(),
        })
    }

    pub fn write_genesis(&self, genesis: &Genesis) -> Result<(), ConfigError> {
        self.ensure_dirs()?;
        let text = serde_json::to_string_pretty(genesis).expect("genesis serializes");
        fs::write(&self.genesis_path, text + "\n").map_err(|source| ConfigError::Io {
            path: self.genesis_path.clone(),
            source,
        })
    }

    /// Whether the journal holds at least one block. The key registry is
    /// fixed from then on.
    pub fn ledger_started(&self) -> bool {
        fs::metadata(&self.ledger_journal_path).is_ok_and(|m| m.len() > 0)
    }

    /// Opens every component and replays the journal.
    pub fn open_node(&self, passphrase: &str) -> Result<Arc<RegistryNode>, ConfigError> {
        let genesis = self
            .read_genesis()?
            .ok_or_else(|| ConfigError::NoGenesis(self.genesis_path.clone()))?;
        let keystore = self.open_keystore(passphrase)?;
        let node_err = |e: NodeError| ConfigError::Node(e);
        let store = DiskStore::open(&self.store_root).map_err(|e| node_err(e.into()))?;
        let pointers = PointerTable::open(&self.pointer_path).map_err(|e| node_err(e.into()))?;
        let anchors = AnchorLog::open(&self.anchor_log_path).map_err(|e| node_err(e.into()))?;
        let journal = Journal::open(&self.ledger_journal_path).map_err(|e| node_err(e.into()))?;
        let node = RegistryNode::new(NodeComponents {
            genesis,
            validators: self.validators,
            validator_seed: self.validator_seed,
            store: Arc::new(store),
            pointers,
            keystore,
            anchors,
            journal: Some(journal),
        })?;
        Ok(Arc::new(node))
    }
}
