//! On-disk state directory.
//!
//! ```text
//! <root>/
//!   chain.jsonl     the ledger (line-delimited, see the ledger module)
//!   registry.json   persons and articles
//!   history.json    reviewer outcome history, derived from the chain
//!   outbox/         one JSON notification per sent invitation
//!   clock           simulated time in ms, one decimal integer
//!   lock            holder pid while a process owns the directory
//! ```
//!
//! All writes go through a temp file and rename, so a crash never leaves a
//! half-written file behind. The reviewer history is exported for external
//! consumers but never read back: it replays from the chain on open.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::TryRngCore;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig};
use crate::ledger::{load_chain, save_chain, Chain, Difficulty, LedgerError};
use crate::registry::{Registry, RegistryError};
use crate::workflow::WorkflowError;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("state directory {0} already initialized")]
    AlreadyInitialized(PathBuf),
    #[error("state directory {0} is not initialized (run init first)")]
    NotInitialized(PathBuf),
    #[error("state directory is locked by pid {pid}")]
    Locked { pid: u32 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Paths within one state directory.
#[derive(Debug, Clone)]
pub struct StateDir {
    root: PathBuf,
}

impl StateDir {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn chain_path(&self) -> PathBuf {
        self.root.join("chain.jsonl")
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    pub fn history_path(&self) -> PathBuf {
        self.root.join("history.json")
    }

    pub fn outbox_dir(&self) -> PathBuf {
        self.root.join("outbox")
    }

    pub fn clock_path(&self) -> PathBuf {
        self.root.join("clock")
    }

    pub fn lock_path(&self) -> PathBuf {
        self.root.join("lock")
    }

    /// Create and seed a fresh state directory: a genesis-only chain at the
    /// given difficulty, an empty registry, an empty history, outbox, and a
    /// simulated clock at zero. The salt defaults to fresh OS randomness;
    /// passing one explicitly lets several nodes share a chain identity.
    pub fn init(
        root: &Path,
        difficulty: Difficulty,
        salt: Option<[u8; 32]>,
    ) -> Result<StateDir, StoreError> {
        let dir = StateDir {
            root: root.to_path_buf(),
        };
        if dir.chain_path().exists() {
            return Err(StoreError::AlreadyInitialized(dir.root.clone()));
        }
        fs::create_dir_all(&dir.root)?;
        fs::create_dir_all(dir.outbox_dir())?;
        let salt = match salt {
            Some(salt) => salt,
            None => {
                let mut salt = [0u8; 32];
                rand::rngs::OsRng
                    .try_fill_bytes(&mut salt)
                    .map_err(|e| StoreError::Config(format!("no OS randomness: {e}")))?;
                salt
            }
        };
        let chain = Chain::new(difficulty, salt);
        save_chain(&chain, &dir.chain_path())?;
        Registry::new().save(&dir.registry_path())?;
        write_atomic(&dir.history_path(), b"{}\n")?;
        dir.write_clock(0)?;
        Ok(dir)
    }

    /// Open an existing state directory.
    pub fn open(root: &Path) -> Result<StateDir, StoreError> {
        let dir = StateDir {
            root: root.to_path_buf(),
        };
        if !dir.chain_path().exists() || !dir.registry_path().exists() {
            return Err(StoreError::NotInitialized(dir.root.clone()));
        }
        Ok(dir)
    }

    /// Load chain + registry and replay into a ready engine.
    pub fn load_engine(&self, config: EngineConfig) -> Result<Engine, StoreError> {
        let chain = load_chain(&self.chain_path())?;
        let registry = Registry::load(&self.registry_path())?;
        let engine = Engine::new(registry, chain, Some(self.outbox_dir()), config)?;
        Ok(engine)
    }

    /// Persist everything the engine owns: chain, registry, and the
    /// chain-derived reviewer history snapshot.
    pub fn persist(&self, engine: &Engine) -> Result<(), StoreError> {
        save_chain(&engine.chain, &self.chain_path())?;
        engine.registry.save(&self.registry_path())?;
        let mut bytes = serde_json::to_vec_pretty(engine.history())
            .map_err(|e| StoreError::Config(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&self.history_path(), &bytes)?;
        Ok(())
    }

    pub fn read_clock(&self) -> Result<u64, StoreError> {
        let text = fs::read_to_string(self.clock_path())?;
        text.trim()
            .parse()
            .map_err(|e| StoreError::Config(format!("bad clock file: {e}")))
    }

    pub fn write_clock(&self, now_ms: u64) -> Result<(), StoreError> {
        write_atomic(&self.clock_path(), format!("{now_ms}\n").as_bytes())
    }

    /// Take the directory lock. Stale locks (dead pid) are broken; a live
    /// holder is an error.
    pub fn lock(&self) -> Result<StateLock, StoreError> {
        let path = self.lock_path();
        loop {
            match fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
            {
                Ok(mut file) => {
                    writeln!(file, "{}", std::process::id())?;
                    return Ok(StateLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder: Option<u32> = fs::read_to_string(&path)
                        .ok()
                        .and_then(|s| s.trim().parse().ok());
                    match holder {
                        Some(pid) if pid_alive(pid) => return Err(StoreError::Locked { pid }),
                        _ => {
                            // Holder is gone; break the stale lock and retry.
                            let _ = fs::remove_file(&path);
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(unix)]
fn pid_alive(pid: u32) -> bool {
    // Signal 0 probes existence without sending anything.
    unsafe { libc::kill(pid as libc::pid_t, 0) == 0 }
}

#[cfg(not(unix))]
fn pid_alive(_pid: u32) -> bool {
    true
}

/// Held directory lock; releases on drop.
#[derive(Debug)]
pub struct StateLock {
    path: PathBuf,
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
