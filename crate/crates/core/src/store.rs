//! Per-run intermediate storage with an LRU-managed memory budget.
//!
//! Each run gets a memory budget. When a put (or a promotion on get) would
//! push the run's memory tier over budget, the least recently used memory
//! entries of that run are written to the spill directory and dropped from
//! memory. Spilled entries stay readable; reading one promotes it back.
//!
//! Recency is a store-wide tick incremented on every put and get.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecError};
use crate::frame::{Column, Field, Frame, FrameError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunId(pub String);

impl RunId {
    pub fn new(id: impl Into<String>) -> Self {
        RunId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RunId {
    fn from(s: &str) -> Self {
        RunId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HandleId(pub u64);

impl fmt::Display for HandleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{:06}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Memory,
    Disk,
}

/// Token returned by the store. Cheap to clone and send between threads.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameHandle {
    pub id: HandleId,
    pub run_id: RunId,
    pub size_bytes: u64,
}

/// Point-in-time view of a handle's placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HandleInfo {
    pub id: HandleId,
    pub run_id: RunId,
    pub size_bytes: u64,
    pub tier: Tier,
    pub last_access: u64,
    /// `None` for frames, the kind label for artifacts.
    pub artifact_kind: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunUsage {
    pub memory_bytes: u64,
    pub disk_bytes: u64,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Memory budget applied to each run unless overridden in `open_run`.
    pub memory_budget_bytes: u64,
    pub spill_dir: PathBuf,
    /// Optional cap on each run's disk tier. `None` means unbounded.
    pub spill_capacity_bytes: Option<u64>,
}

impl StoreConfig {
    pub fn new(memory_budget_bytes: u64, spill_dir: impl Into<PathBuf>) -> Self {
        StoreConfig {
            memory_budget_bytes,
            spill_dir: spill_dir.into(),
            spill_capacity_bytes: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid store configuration: {0}")]
    Config(String),
    #[error("run `{0}` is not open in the store")]
    UnknownRun(RunId),
    #[error("run `{0}` is already open")]
    RunExists(RunId),
    #[error("handle {0} not found")]
    NotFound(HandleId),
    #[error("entry of {size} bytes does not fit run `{run}` (memory budget {budget} bytes{spill})")]
    StoreFull {
        run: RunId,
        size: u64,
        budget: u64,
        spill: String,
    },
    #[error("handle {0} refers to {1}")]
    WrongKind(HandleId, &'static str),
    #[error("artifact blob must not be empty")]
    EmptyBlob,
    #[error("fork needs at least 2 branches, got {0}")]
    ForkArity(usize),
    #[error("schema error: {0}")]
    Schema(#[from] FrameError),
    #[error("spill i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("spill file decode: {0}")]
    Codec(#[from] CodecError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Clone)]
enum Payload {
    Frame(Arc<Frame>),
    Blob(Arc<[u8]>),
}

#[derive(Clone)]
struct Entry {
    run: RunId,
    artifact_kind: Option<String>,
    size: u64,
    tier: Tier,
    last_access: u64,
    payload: Option<Payload>,
    handles: usize,
}

struct RunState {
    budget: u64,
    memory_used: u64,
    disk_used: u64,
    entries: BTreeSet<u64>,
}

#[derive(Default)]
struct Inner {
    tick: u64,
    next_id: u64,
    runs: HashMap<RunId, RunState>,
    /// Keyed by the id of the handle that created the entry.
    entries: HashMap<u64, Entry>,
    /// Every live handle (originals and aliases) → entry key.
    handles: HashMap<u64, u64>,
}

pub struct Store {
    config: StoreConfig,
    /// Private subdirectory of the spill dir, so stores never share files.
    spill_root: PathBuf,
    inner: Mutex<Inner>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("config", &self.config).finish()
    }
}

impl Store {
    pub fn new(config: StoreConfig) -> Result<Store> {
        if config.memory_budget_bytes == 0 {
            return Err(StoreError::Config("memory budget must be > 0".into()));
        }
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let spill_root = config
            .spill_dir
            .join(format!("store-{}-{}", std::process::id(), NEXT.fetch_add(1, AtomicOrdering::Relaxed)));
        Ok(Store {
            config,
            spill_root,
            inner: Mutex::new(Inner::default()),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn spill_root(&self) -> &Path {
        &self.spill_root
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a run. `budget` overrides the configured per-run budget.
    pub fn open_run(&self, run: &RunId, budget: Option<u64>) -> Result<()> {
        let budget = budget.unwrap_or(self.config.memory_budget_bytes);
        if budget == 0 {
            return Err(StoreError::Config("memory budget must be > 0".into()));
        }
        let mut inner = self.lock();
        if inner.runs.contains_key(run) {
            return Err(StoreError::RunExists(run.clone()));
        }
        inner.runs.insert(
            run.clone(),
            RunState {
                budget,
                memory_used: 0,
                disk_used: 0,
                entries: BTreeSet::new(),
            },
        );
        Ok(())
    }

    pub fn has_run(&self, run: &RunId) -> bool {
        self.lock().runs.contains_key(run)
    }

    pub fn put_frame(&self, run: &RunId, frame: Frame) -> Result<FrameHandle> {
        let size = frame.size_bytes();
        self.insert(run, size, None, Payload::Frame(Arc::new(frame)))
    }

    /// Validates raw parts into a frame, then stores it.
    pub fn put_parts(&self, run: &RunId, fields: Vec<Field>, columns: Vec<Column>) -> Result<FrameHandle> {
        let frame = Frame::new(fields, columns)?;
        self.put_frame(run, frame)
    }

    pub fn put_artifact(&self, run: &RunId, blob: Vec<u8>, kind: &str) -> Result<FrameHandle> {
        if blob.is_empty() {
            return Err(StoreError::EmptyBlob);
        }
        let size = blob.len() as u64;
        self.insert(run, size, Some(kind.to_string()), Payload::Blob(blob.into()))
    }

    fn insert(&self, run: &RunId, size: u64, kind: Option<String>, payload: Payload) -> Result<FrameHandle> {
        let mut inner = self.lock();
        if !inner.runs.contains_key(run) {
            return Err(StoreError::UnknownRun(run.clone()));
        }
        self.make_room(&mut inner, run, size, None)?;
        inner.tick += 1;
        inner.next_id += 1;
        let id = inner.next_id;
        let tick = inner.tick;
        inner.entries.insert(
            id,
            Entry {
                run: run.clone(),
                artifact_kind: kind,
                size,
                tier: Tier::Memory,
                last_access: tick,
                payload: Some(payload),
                handles: 1,
            },
        );
        inner.handles.insert(id, id);
        let state = inner.runs.get_mut(run).expect("run checked above");
        state.memory_used += size;
        state.entries.insert(id);
        Ok(FrameHandle {
            id: HandleId(id),
            run_id: run.clone(),
            size_bytes: size,
        })
    }

    /// Spills LRU memory entries of `run` (never `keep`) until `incoming`
    /// more bytes fit the budget. Fails without side effects if impossible.
    fn make_room(&self, inner: &mut Inner, run: &RunId, incoming: u64, keep: Option<u64>) -> Result<()> {
        let state = &inner.runs[run];
        let full = |spill: String| StoreError::StoreFull {
            run: run.clone(),
            size: incoming,
            budget: state.budget,
            spill,
        };
        if incoming > state.budget {
            return Err(full(String::new()));
        }
        if state.memory_used + incoming <= state.budget {
            return Ok(());
        }
        let mut candidates: Vec<(u64, u64, u64)> = state
            .entries
            .iter()
            .filter(|&&k| Some(k) != keep)
            .filter_map(|k| {
                let e = &inner.entries[k];
                (e.tier == Tier::Memory).then_some((e.last_access, *k, e.size))
            })
            .collect();
        candidates.sort_unstable();
        let mut victims = Vec::new();
        let mut used = state.memory_used;
        let mut spilled = 0u64;
        for (_, key, size) in candidates {
            if used + incoming <= state.budget {
                break;
            }
            victims.push(key);
            used -= size;
            spilled += size;
        }
        if used + incoming > state.budget {
            return Err(full(String::new()));
        }
        if let Some(cap) = self.config.spill_capacity_bytes {
            if state.disk_used + spilled > cap {
                return Err(full(format!(", spill capacity {cap} bytes")));
            }
        }
        for key in victims {
            self.spill(inner, key)?;
        }
        Ok(())
    }

    fn spill_path(&self, key: u64) -> PathBuf {
        self.spill_root.join(format!("{key:016x}.ffrm"))
    }

    fn spill(&self, inner: &mut Inner, key: u64) -> Result<()> {
        let entry = inner.entries.get_mut(&key).expect("victim exists");
        let bytes = match entry.payload.as_ref().expect("memory entry has payload") {
            Payload::Frame(f) => codec::encode_frame(f),
            Payload::Blob(b) => codec::encode_blob(entry.artifact_kind.as_deref().unwrap_or(""), b),
        };
        let path = self.spill_path(key);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.spill_root).map_err(io)?;
        fs::write(&path, bytes).map_err(io)?;
        entry.payload = None;
        entry.tier = Tier::Disk;
        let size = entry.size;
        let state = inner.runs.get_mut(&entry.run).expect("entry run exists");
        state.memory_used -= size;
        state.disk_used += size;
        tracing::debug!(entry = key, size, "spilled to disk");
        Ok(())
    }

    fn load_spilled(&self, path: &Path, artifact: bool) -> Result<Payload> {
        let bytes = fs::read(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(if artifact {
            let (_, blob) = codec::decode_blob(&bytes)?;
            Payload::Blob(blob.into())
        } else {
            Payload::Frame(Arc::new(codec::decode_frame(&bytes)?))
        })
    }

    /// Resolves a handle, refreshing recency and promoting disk entries.
    fn access(&self, handle: &FrameHandle) -> Result<(Option<String>, Payload)> {
        let mut inner = self.lock();
        let key = *inner
            .handles
            .get(&handle.id.0)
            .ok_or(StoreError::NotFound(handle.id))?;
        let (run, tier, kind) = {
            let e = &inner.entries[&key];
            (e.run.clone(), e.tier, e.artifact_kind.clone())
        };
        if tier == Tier::Disk {
            let path = self.spill_path(key);
            let payload = self.load_spilled(&path, kind.is_some())?;
            let size = inner.entries[&key].size;
            self.make_room(&mut inner, &run, size, Some(key))?;
            let _ = fs::remove_file(&path);
            let state = inner.runs.get_mut(&run).expect("entry run exists");
            state.disk_used -= size;
            state.memory_used += size;
            let e = inner.entries.get_mut(&key).expect("entry exists");
            e.tier = Tier::Memory;
            e.payload = Some(payload);
        }
        inner.tick += 1;
        let tick = inner.tick;
        let e = inner.entries.get_mut(&key).expect("entry exists");
        e.last_access = tick;
        Ok((kind, e.payload.clone().expect("memory entry has payload")))
    }

    pub fn get_frame(&self, handle: &FrameHandle) -> Result<Arc<Frame>> {
        match self.access(handle)? {
            (None, Payload::Frame(f)) => Ok(f),
            _ => Err(StoreError::WrongKind(handle.id, "an artifact, not a frame")),
        }
    }

    /// Returns the artifact kind label and its bytes.
    pub fn get_artifact(&self, handle: &FrameHandle) -> Result<(String, Arc<[u8]>)> {
        match self.access(handle)? {
            (Some(kind), Payload::Blob(b)) => Ok((kind, b)),
            _ => Err(StoreError::WrongKind(handle.id, "a frame, not an artifact")),
        }
    }

    /// New handle resolving to the same stored entry. No bytes are copied
    /// and the run's usage does not change.
    pub fn alias(&self, handle: &FrameHandle) -> Result<FrameHandle> {
        let mut inner = self.lock();
        let key = *inner
            .handles
            .get(&handle.id.0)
            .ok_or(StoreError::NotFound(handle.id))?;
        inner.next_id += 1;
        let id = inner.next_id;
        inner.handles.insert(id, key);
        inner.entries.get_mut(&key).expect("entry exists").handles += 1;
        Ok(FrameHandle {
            id: HandleId(id),
            run_id: handle.run_id.clone(),
            size_bytes: handle.size_bytes,
        })
    }

    /// `n` aliases of one entry, for fanning a dataset out to branches.
    pub fn fork(&self, handle: &FrameHandle, n: usize) -> Result<Vec<FrameHandle>> {
        if n < 2 {
            return Err(StoreError::ForkArity(n));
        }
        (0..n).map(|_| self.alias(handle)).collect()
    }

    /// Removes every entry of the run and forgets the run. Idempotent;
    /// returns the number of stored entries removed.
    pub fn drop_run(&self, run: &RunId) -> usize {
        let mut inner = self.lock();
        let Some(state) = inner.runs.remove(run) else {
            return 0;
        };
        inner.handles.retain(|_, key| !state.entries.contains(key));
        for key in &state.entries {
            if let Some(e) = inner.entries.remove(key) {
                if e.tier == Tier::Disk {
                    let _ = fs::remove_file(self.spill_path(*key));
                }
            }
        }
        // only succeeds once no other run has spilled files
        let _ = fs::remove_dir(&self.spill_root);
        state.entries.len()
    }

    pub fn usage(&self, run: &RunId) -> RunUsage {
        let inner = self.lock();
        inner.runs.get(run).map_or(RunUsage::default(), |s| RunUsage {
            memory_bytes: s.memory_used,
            disk_bytes: s.disk_used,
            entries: s.entries.len(),
        })
    }

    pub fn budget(&self, run: &RunId) -> Option<u64> {
        self.lock().runs.get(run).map(|s| s.budget)
    }

    pub fn info(&self, handle: &FrameHandle) -> Result<HandleInfo> {
        let inner = self.lock();
        let key = inner
            .handles
            .get(&handle.id.0)
            .ok_or(StoreError::NotFound(handle.id))?;
        let e = &inner.entries[key];
        Ok(HandleInfo {
            id: handle.id,
            run_id: e.run.clone(),
            size_bytes: e.size,
            tier: e.tier,
            last_access: e.last_access,
            artifact_kind: e.artifact_kind.clone(),
        })
    }

    pub fn tier(&self, handle: &FrameHandle) -> Result<Tier> {
        self.info(handle).map(|i| i.tier)
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        let inner = self.inner.get_mut().unwrap_or_else(|e| e.into_inner());
        for (key, e) in &inner.entries {
            if e.tier == Tier::Disk {
                let _ = fs::remove_file(self.spill_root.join(format!("{key:016x}.ffrm")));
            }
        }
        let _ = fs::remove_dir(&self.spill_root);
    }
}
