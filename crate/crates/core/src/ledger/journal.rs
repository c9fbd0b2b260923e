//! Append-only block journal: one canonical JSON block per line.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{Block, BlockError, Genesis, GenesisError, LedgerState};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal io: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("journal block {height} does not apply: {source}")]
    Replay { height: u64, source: BlockError },
    #[error(transparent)]
    Genesis(#[from] GenesisError),
}

pub struct Journal {
    path: PathBuf,
}

impl Journal {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, JournalError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        if !path.exists() {
            File::create(&path)?;
        }
        Ok(Journal { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, block: &Block) -> Result<(), JournalError> {
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        let mut line = block.canonical_bytes();
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }

    pub fn blocks(&self) -> Result<Vec<Block>, JournalError> {
        let reader = BufReader::new(File::open(&self.path)?);
        let mut blocks = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let block = serde_json::from_str(&line).map_err(|e| JournalError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            blocks.push(block);
        }
        Ok(blocks)
    }
}

/// Rebuilds the state from `genesis` by applying `blocks` in order. Every
/// block's recorded state root is re-checked.
pub fn replay(genesis: &Genesis, blocks: &[Block]) -> Result<LedgerState, JournalError> {
    let mut state = LedgerState::from_genesis(genesis)?;
    for block in blocks {
        state
            .apply_block(block)
            .map_err(|source| JournalError::Replay {
                height: block.height,
                source,
            })?;
    }
    Ok(state)
}
