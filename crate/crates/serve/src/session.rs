//! Live conversations and their persistence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServeError};
use crate::nlu::ParseContext;
use searchassist_core::domain::{AgentAction, SearchState};
use searchassist_core::neural::HiddenState;
use searchassist_core::search::ResultPage;

pub const DEFAULT_TTL: Duration = Duration::from_secs(60 * 60);

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub state: SearchState,
    pub hidden: HiddenState,
    /// Issued queries, oldest first; the last is the active one.
    pub queries: Vec<Vec<String>>,
    /// Result page index for the active query.
    pub offset: usize,
    pub page: Option<ResultPage>,
    /// Labels offered by the last category prompt.
    pub categories: Vec<String>,
    pub cart: BTreeSet<String>,
    pub completed: bool,
    pub ended: bool,
    /// Agent responses so far, used to rotate utterance templates.
    pub responses: u64,
    pub created_ms: u64,
    pub updated_ms: u64,
}

impl Session {
    pub fn new(id: String, hidden_size: usize) -> Self {
        let t = now_ms();
        Self {
            id,
            state: SearchState::default(),
            hidden: HiddenState::zeros(hidden_size),
            queries: Vec::new(),
            offset: 0,
            page: None,
            categories: Vec::new(),
            cart: BTreeSet::new(),
            completed: false,
            ended: false,
            responses: 0,
            created_ms: t,
            updated_ms: t,
        }
    }

    pub fn last_agent(&self) -> Option<AgentAction> {
        self.state.history_agent.last().copied()
    }

    pub fn parse_context(&self) -> ParseContext<'_> {
        ParseContext { queries: &self.queries, last_agent: self.last_agent() }
    }

    pub fn current_query(&self) -> Option<&[String]> {
        self.queries.last().map(Vec::as_slice)
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            length_conv: self.state.length_conv,
            history_user: self.state.history_user.iter().map(|a| a.to_string()).collect(),
            history_agent: self.state.history_agent.iter().map(|a| a.to_string()).collect(),
            query: self.current_query().map(<[String]>::to_vec),
            cart: self.cart.iter().cloned().collect(),
            completed: self.completed,
            ended: self.ended,
            created_ms: self.created_ms,
            updated_ms: self.updated_ms,
        }
    }
}

/// What `GET /sessions/{id}` reveals: no tensors, no raw scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub length_conv: u32,
    pub history_user: Vec<String>,
    pub history_agent: Vec<String>,
    pub query: Option<Vec<String>>,
    pub cart: Vec<String>,
    pub completed: bool,
    pub ended: bool,
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// Sessions keyed by id, each behind its own lock so turns within a
/// session serialize while distinct sessions proceed independently.
/// With a backing file, every change is written through as one JSON
/// object keyed by session id.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SessionHandle>>,
    snapshot: Mutex<BTreeMap<String, Session>>,
    path: Option<PathBuf>,
    ttl: Duration,
}

impl SessionStore {
    pub fn in_memory(ttl: Duration) -> Self {
        Self { sessions: Mutex::default(), snapshot: Mutex::default(), path: None, ttl }
    }

    /// Opens (or creates) a store backed by `path`, restoring any saved
    /// sessions.
    pub fn open(path: &Path, ttl: Duration) -> Result<Self> {
        let saved: BTreeMap<String, Session> = match std::fs::read_to_string(path) {
            Ok(text) if !text.trim().is_empty() => serde_json::from_str(&text)?,
            Ok(_) => BTreeMap::new(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        let sessions = saved.iter().map(|(k, s)| (k.clone(), Arc::new(Mutex::new(s.clone())))).collect();
        Ok(Self { sessions: Mutex::new(sessions), snapshot: Mutex::new(saved), path: Some(path.to_path_buf()), ttl })
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, hidden_size: usize) -> Result<String> {
        self.purge_expired()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), hidden_size);
        self.record(&session)?;
        self.sessions.lock().insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    /// The live session, unless it is unknown or has idled past the TTL.
    pub fn get(&self, id: &str) -> Result<SessionHandle> {
        let handle = self.sessions.lock().get(id).cloned().ok_or_else(|| ServeError::UnknownSession(id.into()))?;
        let idle = now_ms().saturating_sub(handle.lock().updated_ms);
        if u128::from(idle) > self.ttl.as_millis() {
            self.delete(id)?;
            return Err(ServeError::UnknownSession(id.into()));
        }
        Ok(handle)
    }

    /// Idempotent.
    pub fn delete(&self, id: &str) -> Result<()> {
        self.sessions.lock().remove(id);
        let mut snap = self.snapshot.lock();
        if snap.remove(id).is_some() {
            self.write(&snap)?;
        }
        Ok(())
    }

    /// Persists `session`'s current contents. Call while holding its lock.
    pub fn record(&self, session: &Session) -> Result<()> {
        let mut snap = self.snapshot.lock();
        snap.insert(session.id.clone(), session.clone());
        self.write(&snap)
    }

    pub fn purge_expired(&self) -> Result<usize> {
        let now = now_ms();
        let stale: Vec<String> = self
            .sessions
            .lock()
            .iter()
            .filter(|(_, s)| {
                s.try_lock().is_some_and(|s| u128::from(now.saturating_sub(s.updated_ms)) > self.ttl.as_millis())
            })
            .map(|(k, _)| k.clone())
            .collect();
        for id in &stale {
            self.delete(id)?;
        }
        Ok(stale.len())
    }

    fn write(&self, snap: &BTreeMap<String, Session>) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(snap)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
