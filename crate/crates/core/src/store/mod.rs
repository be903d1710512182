//! Sessions, turns, content-addressed artifacts and the memo cache.
//!
//! With a cache directory, bytes live under `blobs/<first2hex>/<digest>`
//! and every mutation is appended to `index.jsonl`, which is replayed on
//! open. Without one everything stays in memory.

mod index;
mod types;

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::Utc;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::canonical::to_canonical;
use crate::media::MediaType;
use crate::policy::Tier;
use index::{Record, SessionRecord};
pub use types::{
    input_digest, policy_digest, Artifact, ArtifactId, ArtifactMeta, MemoKey, Mode, PlanId, Role,
    Session, SessionId, Turn, TurnId,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
}

struct Entry {
    meta: ArtifactMeta,
    /// Held only by in-memory stores.
    bytes: Option<Arc<[u8]>>,
    last_access: AtomicU64,
}

struct SessionState {
    session: Session,
    turns: Vec<Turn>,
    /// Artifacts the active plan has produced or consumed so far.
    plan_pins: HashSet<ArtifactId>,
}

#[derive(Default)]
struct State {
    artifacts: HashMap<ArtifactId, Entry>,
    memo: HashMap<MemoKey, ArtifactId>,
    sessions: HashMap<SessionId, SessionState>,
    total_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreStats {
    pub artifacts: usize,
    pub memo_entries: usize,
    pub sessions: usize,
    pub total_bytes: u64,
}

pub struct Store {
    dir: Option<PathBuf>,
    state: RwLock<State>,
    index: Mutex<Option<File>>,
    clock: AtomicU64,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            state: RwLock::new(State::default()),
            index: Mutex::new(None),
            clock: AtomicU64::new(0),
        }
    }

    /// Opens or creates a store rooted at `dir`, replaying its index.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("blobs"))?;
        let index_path = dir.join("index.jsonl");
        let store = Self {
            dir: Some(dir),
            state: RwLock::new(State::default()),
            index: Mutex::new(None),
            clock: AtomicU64::new(0),
        };
        if index_path.exists() {
            store.replay(&index_path)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)?;
        *store.index.lock() = Some(file);
        Ok(store)
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    fn blob_path(&self, id: &ArtifactId) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join("blobs").join(&id.0[..2]).join(&id.0))
    }

    fn append(&self, record: &Record) -> Result<(), StoreError> {
        let mut guard = self.index.lock();
        if let Some(file) = guard.as_mut() {
            let mut line = to_canonical(record);
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        Ok(())
    }

    fn replay(&self, path: &Path) -> Result<(), StoreError> {
        let reader = BufReader::new(File::open(path)?);
        let mut st = self.state.write();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    // a torn final write after a crash; everything before it is intact
                    tracing::warn!(line = n + 1, error = %e, "skipping unreadable index record");
                    continue;
                }
            };
            match record {
                Record::Artifact(meta) => {
                    let blob = self.blob_path(&meta.id).expect("on-disk store");
                    match fs::metadata(&blob) {
                        Ok(m) if m.len() == meta.size_bytes => {}
                        _ => {
                            tracing::warn!(id = %meta.id, "index names a missing or truncated blob");
                            continue;
                        }
                    }
                    if !st.artifacts.contains_key(&meta.id) {
                        st.total_bytes += meta.size_bytes;
                        let t = self.tick();
                        st.artifacts.insert(
                            meta.id.clone(),
                            Entry {
                                meta,
                                bytes: None,
                                last_access: AtomicU64::new(t),
                            },
                        );
                    }
                }
                Record::Memo { key, artifact } => {
                    // the record overrides any earlier entry even when its
                    // target has since been evicted
                    if st.artifacts.contains_key(&artifact) {
                        st.memo.insert(key, artifact);
                    } else {
                        st.memo.remove(&key);
                    }
                }
                Record::Evict { id } => {
                    if let Some(e) = st.artifacts.remove(&id) {
                        st.total_bytes -= e.meta.size_bytes;
                    }
                    st.memo.retain(|_, a| *a != id);
                }
                Record::Session(r) => {
                    let session = Session {
                        id: r.id.clone(),
                        created_at: r.created_at,
                        mode: r.mode,
                        tier_override: r.tier_override,
                        turns: Vec::new(),
                        active_plan: None,
                    };
                    st.sessions.insert(
                        r.id,
                        SessionState {
                            session,
                            turns: Vec::new(),
                            plan_pins: HashSet::new(),
                        },
                    );
                }
                Record::Turn {
                    session_id,
                    id,
                    role,
                    text,
                    attachments,
                    created_at,
                } => {
                    if let Some(s) = st.sessions.get_mut(&session_id) {
                        s.session.turns.push(id.clone());
                        s.turns.push(Turn {
                            id,
                            session_id,
                            role,
                            text,
                            attachments,
                            created_at,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn put_artifact(
        &self,
        bytes: &[u8],
        media: MediaType,
        producer: &str,
        inputs: &[ArtifactId],
    ) -> Result<ArtifactId, StoreError> {
        self.put_artifact_with_role(bytes, media, producer, inputs, None)
    }

    /// Identical bytes map to one artifact; the first write's metadata wins.
    pub fn put_artifact_with_role(
        &self,
        bytes: &[u8],
        media: MediaType,
        producer: &str,
        inputs: &[ArtifactId],
        role: Option<&str>,
    ) -> Result<ArtifactId, StoreError> {
        if !media.is_legal() {
            return Err(StoreError::Validation(format!(
                "{media} is not a legal modality/format pair"
            )));
        }
        let id = ArtifactId::of(bytes);
        {
            let st = self.state.read();
            if let Some(e) = st.artifacts.get(&id) {
                e.last_access.store(self.tick(), Ordering::Relaxed);
                return Ok(id);
            }
            for input in inputs {
                if !st.artifacts.contains_key(input) {
                    return Err(StoreError::Integrity(format!(
                        "input artifact {input} does not exist"
                    )));
                }
            }
            if reaches(&st, inputs, &id) {
                return Err(StoreError::Integrity(format!(
                    "artifact {id} would become its own ancestor"
                )));
            }
        }

        if let Some(path) = self.blob_path(&id) {
            write_blob(&path, bytes)?;
        }
        let meta = ArtifactMeta {
            id: id.clone(),
            modality: media.modality,
            format: media.format,
            producer: producer.to_string(),
            inputs: inputs.to_vec(),
            created_at: Utc::now(),
            size_bytes: bytes.len() as u64,
            role: role.map(str::to_string),
        };

        let mut st = self.state.write();
        if let Some(e) = st.artifacts.get(&id) {
            // lost a race with an identical put
            e.last_access.store(self.tick(), Ordering::Relaxed);
            return Ok(id);
        }
        if let Some(missing) = inputs.iter().find(|i| !st.artifacts.contains_key(*i)) {
            return Err(StoreError::Integrity(format!(
                "input artifact {missing} was evicted during the put"
            )));
        }
        self.append(&Record::Artifact(meta.clone()))?;
        let held = if self.dir.is_none() {
            Some(Arc::from(bytes))
        } else {
            None
        };
        st.total_bytes += meta.size_bytes;
        let t = self.tick();
        st.artifacts.insert(
            id.clone(),
            Entry {
                meta,
                bytes: held,
                last_access: AtomicU64::new(t),
            },
        );
        Ok(id)
    }

    /// Returns the bytes after checking they still hash to `id`.
    pub fn get_artifact(&self, id: &ArtifactId) -> Result<Artifact, StoreError> {
        let (meta, held) = {
            let st = self.state.read();
            let e = st
                .artifacts
                .get(id)
                .ok_or_else(|| StoreError::NotFound(format!("artifact {id}")))?;
            e.last_access.store(self.tick(), Ordering::Relaxed);
            (e.meta.clone(), e.bytes.clone())
        };
        let bytes = match held {
            Some(b) => b.to_vec(),
            None => {
                let path = self.blob_path(id).expect("on-disk store");
                fs::read(&path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => {
                        StoreError::Integrity(format!("blob for {id} is missing"))
                    }
                    _ => StoreError::Io(e),
                })?
            }
        };
        if ArtifactId::of(&bytes) != *id {
            return Err(StoreError::Integrity(format!(
                "blob for {id} does not match its digest"
            )));
        }
        Ok(Artifact { meta, bytes })
    }

    pub fn artifact_meta(&self, id: &ArtifactId) -> Result<ArtifactMeta, StoreError> {
        let st = self.state.read();
        st.artifacts
            .get(id)
            .map(|e| e.meta.clone())
            .ok_or_else(|| StoreError::NotFound(format!("artifact {id}")))
    }

    pub fn contains(&self, id: &ArtifactId) -> bool {
        self.state.read().artifacts.contains_key(id)
    }

    pub fn memo_lookup(&self, key: &MemoKey) -> Option<ArtifactId> {
        let st = self.state.read();
        let id = st.memo.get(key)?;
        let e = st.artifacts.get(id)?;
        e.last_access.store(self.tick(), Ordering::Relaxed);
        Some(id.clone())
    }

    /// Last writer wins.
    pub fn memo_record(&self, key: MemoKey, artifact: &ArtifactId) -> Result<(), StoreError> {
        let mut st = self.state.write();
        if !st.artifacts.contains_key(artifact) {
            return Err(StoreError::Integrity(format!(
                "memo target {artifact} does not exist"
            )));
        }
        self.append(&Record::Memo {
            key: key.clone(),
            artifact: artifact.clone(),
        })?;
        st.memo.insert(key, artifact.clone());
        Ok(())
    }

    /// Evicts least-recently-accessed unpinned artifacts until the store
    /// holds at most `target_bytes`. Returns the number of bytes freed.
    pub fn evict(&self, target_bytes: u64) -> Result<u64, StoreError> {
        let mut st = self.state.write();
        if st.total_bytes <= target_bytes {
            return Ok(0);
        }
        let pinned = pinned_set(&st);
        let mut candidates: Vec<(u64, ArtifactId, u64)> = st
            .artifacts
            .values()
            .filter(|e| !pinned.contains(&e.meta.id))
            .map(|e| {
                (
                    e.last_access.load(Ordering::Relaxed),
                    e.meta.id.clone(),
                    e.meta.size_bytes,
                )
            })
            .collect();
        candidates.sort();

        let mut freed = 0;
        let mut evicted = HashSet::new();
        for (_, id, size) in candidates {
            if st.total_bytes <= target_bytes {
                break;
            }
            self.append(&Record::Evict { id: id.clone() })?;
            if let Some(path) = self.blob_path(&id) {
                if let Err(e) = fs::remove_file(&path) {
                    tracing::warn!(%id, error = %e, "could not remove evicted blob");
                }
            }
            st.artifacts.remove(&id);
            st.total_bytes -= size;
            freed += size;
            evicted.insert(id);
        }
        st.memo.retain(|_, a| !evicted.contains(a));
        Ok(freed)
    }

    pub fn stats(&self) -> StoreStats {
        let st = self.state.read();
        StoreStats {
            artifacts: st.artifacts.len(),
            memo_entries: st.memo.len(),
            sessions: st.sessions.len(),
            total_bytes: st.total_bytes,
        }
    }

    /// Ids of every stored artifact, sorted.
    pub fn artifact_ids(&self) -> Vec<ArtifactId> {
        let mut ids: Vec<_> = self.state.read().artifacts.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create_session(
        &self,
        mode: Mode,
        tier_override: Option<Tier>,
    ) -> Result<Session, StoreError> {
        let session = Session {
            id: SessionId::fresh(),
            created_at: Utc::now(),
            mode,
            tier_override,
            turns: Vec::new(),
            active_plan: None,
        };
        let mut st = self.state.write();
        self.append(&Record::Session(SessionRecord::from(&session)))?;
        st.sessions.insert(
            session.id.clone(),
            SessionState {
                session: session.clone(),
                turns: Vec::new(),
                plan_pins: HashSet::new(),
            },
        );
        Ok(session)
    }

    pub fn session(&self, id: &SessionId) -> Result<Session, StoreError> {
        let st = self.state.read();
        st.sessions
            .get(id)
            .map(|s| s.session.clone())
            .ok_or_else(|| StoreError::NotFound(format!("session {id}")))
    }

    pub fn turns(&self, id: &SessionId) -> Result<Vec<Turn>, StoreError> {
        let st = self.state.read();
        st.sessions
            .get(id)
            .map(|s| s.turns.clone())
            .ok_or_else(|| StoreError::NotFound(format!("session {id}")))
    }

    pub fn append_turn(
        &self,
        session: &SessionId,
        role: Role,
        text: &str,
        attachments: &[ArtifactId],
    ) -> Result<Turn, StoreError> {
        let mut st = self.state.write();
        if !st.sessions.contains_key(session) {
            return Err(StoreError::NotFound(format!("session {session}")));
        }
        if let Some(missing) = attachments.iter().find(|a| !st.artifacts.contains_key(*a)) {
            return Err(StoreError::Integrity(format!(
                "attachment {missing} does not exist"
            )));
        }
        let s = st.sessions.get_mut(session).expect("checked above");
        let turn = Turn {
            id: TurnId(format!("{}-t{}", session.0, s.turns.len() + 1)),
            session_id: session.clone(),
            role,
            text: text.to_string(),
            attachments: attachments.to_vec(),
            created_at: Utc::now(),
        };
        self.append(&Record::from(&turn))?;
        s.session.turns.push(turn.id.clone());
        s.turns.push(turn.clone());
        Ok(turn)
    }

    /// Marks `plan` as the session's active plan. Fails if another plan is
    /// still active.
    pub fn begin_plan(&self, session: &SessionId, plan: &PlanId) -> Result<(), StoreError> {
        let mut st = self.state.write();
        let s = st
            .sessions
            .get_mut(session)
            .ok_or_else(|| StoreError::NotFound(format!("session {session}")))?;
        match &s.session.active_plan {
            Some(active) if active != plan => Err(StoreError::Conflict(format!(
                "session {session} already has active plan {active}"
            ))),
            _ => {
                s.session.active_plan = Some(plan.clone());
                Ok(())
            }
        }
    }

    /// Protects `artifact` from eviction while `plan` is active.
    pub fn pin_for_plan(
        &self,
        session: &SessionId,
        plan: &PlanId,
        artifact: &ArtifactId,
    ) -> Result<(), StoreError> {
        let mut st = self.state.write();
        let s = st
            .sessions
            .get_mut(session)
            .ok_or_else(|| StoreError::NotFound(format!("session {session}")))?;
        if s.session.active_plan.as_ref() != Some(plan) {
            return Err(StoreError::Conflict(format!(
                "plan {plan} is not active in session {session}"
            )));
        }
        s.plan_pins.insert(artifact.clone());
        Ok(())
    }

    pub fn end_plan(&self, session: &SessionId, plan: &PlanId) -> Result<(), StoreError> {
        let mut st = self.state.write();
        let s = st
            .sessions
            .get_mut(session)
            .ok_or_else(|| StoreError::NotFound(format!("session {session}")))?;
        if s.session.active_plan.as_ref() == Some(plan) {
            s.session.active_plan = None;
            s.plan_pins.clear();
        }
        Ok(())
    }

    /// Artifacts referenced by a turn or by an active plan, sorted.
    pub fn pinned(&self) -> Vec<ArtifactId> {
        let mut v: Vec<_> = pinned_set(&self.state.read()).into_iter().collect();
        v.sort();
        v
    }
}

fn pinned_set(st: &State) -> HashSet<ArtifactId> {
    let mut pinned = HashSet::new();
    for s in st.sessions.values() {
        for t in &s.turns {
            pinned.extend(t.attachments.iter().cloned());
        }
        pinned.extend(s.plan_pins.iter().cloned());
    }
    pinned
}

/// Whether `target` is among `from` or their recorded ancestors.
fn reaches(st: &State, from: &[ArtifactId], target: &ArtifactId) -> bool {
    let mut stack: Vec<&ArtifactId> = from.iter().collect();
    let mut seen = HashSet::new();
    while let Some(id) = stack.pop() {
        if id == target {
            return true;
        }
        if seen.insert(id) {
            if let Some(e) = st.artifacts.get(id) {
                stack.extend(e.meta.inputs.iter());
            }
        }
    }
    false
}

fn write_blob(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Ok(m) = fs::metadata(path) {
        if m.len() == bytes.len() as u64 {
            return Ok(());
        }
    }
    let parent = path.parent().expect("blob paths have a parent");
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".{}.{}", uuid::Uuid::new_v4().simple(), "tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
