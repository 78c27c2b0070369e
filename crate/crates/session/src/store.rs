//! Elicitation sessions as append-only event logs.
//!
//! Each session lives in `<dir>/<id>.jsonl`. The first record carries the
//! base model and bearer token; later records are judgements, consensus
//! values and exports. Opening a store replays every log.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use pathwise_core::model::TripleError;
use pathwise_core::{
    parse_model, run_named_queries, serialize_model, validate, CellRef, CptEntry, ElicitedTriple,
    InfluenceDiagram, ModelFileError, QueryError, QueryResult, Violation,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Empty,
    Individual,
    Consensus,
}

/// One elicited cell of the base model and what has been captured for it.
#[derive(Debug, Clone, PartialEq)]
pub struct RowState {
    pub key: String,
    pub cell: CellRef,
    /// Judgement declared in the base model; used until consensus is set.
    pub default: ElicitedTriple,
    pub judgements: BTreeMap<String, ElicitedTriple>,
    pub consensus: Option<ElicitedTriple>,
}

impl RowState {
    pub fn status(&self) -> RowStatus {
        if self.consensus.is_some() {
            RowStatus::Consensus
        } else if self.judgements.is_empty() {
            RowStatus::Empty
        } else {
            RowStatus::Individual
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        token: String,
        model: serde_json::Value,
    },
    Judgement {
        row: String,
        expert: String,
        triple: ElicitedTriple,
    },
    Consensus {
        row: String,
        triple: ElicitedTriple,
    },
    Exported,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelFileError),
    #[error("unknown row `{0}`")]
    UnknownRow(String),
    #[error("{field}: {source}")]
    Triple {
        field: &'static str,
        source: TripleError,
    },
    #[error("row `{row}` would break the model: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Conflict { row: String, violations: Vec<Violation> },
    #[error("expert label must be 1 to 64 printable characters")]
    InvalidExpert,
    #[error("{} row(s) still pending", .0.len())]
    Pending(Vec<String>),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("session log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("session log {path}, line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preview {
    pub queries: Vec<QueryResult>,
    /// Rows whose values still come from the base model.
    pub provisional: Vec<String>,
    pub all_provisional: bool,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    token: String,
    base: InfluenceDiagram,
    rows: Vec<RowState>,
    index: HashMap<String, usize>,
    log: Option<PathBuf>,
    seq: u64,
}

fn check_expert(expert: &str) -> Result<(), SessionError> {
    let n = expert.chars().count();
    if n == 0 || n > 64 || expert.chars().any(char::is_control) {
        return Err(SessionError::InvalidExpert);
    }
    Ok(())
}

pub fn check_triple(t: &ElicitedTriple) -> Result<(), SessionError> {
    t.check().map_err(|source| SessionError::Triple {
        field: source.field(),
        source,
    })
}

impl Session {
    fn from_model(id: String, token: String, base: InfluenceDiagram) -> Self {
        let rows: Vec<RowState> = base
            .elicited_cells()
            .into_iter()
            .map(|(cell, default)| RowState {
                key: base.cell_key(&cell),
                cell,
                default,
                judgements: BTreeMap::new(),
                consensus: None,
            })
            .collect();
        let index = rows.iter().enumerate().map(|(i, r)| (r.key.clone(), i)).collect();
        Session {
            id,
            token,
            base,
            rows,
            index,
            log: None,
            seq: 0,
        }
    }

    pub fn token_matches(&self, token: &str) -> bool {
        self.token == token
    }

    pub fn rows(&self) -> &[RowState] {
        &self.rows
    }

    pub fn row(&self, key: &str) -> Result<&RowState, SessionError> {
        self.index
            .get(key)
            .map(|&i| &self.rows[i])
            .ok_or_else(|| SessionError::UnknownRow(key.to_string()))
    }

    pub fn pending(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| r.consensus.is_none())
            .map(|r| r.key.clone())
            .collect()
    }

    /// Base model with every consensus triple in place of its default.
    pub fn effective_model(&self) -> InfluenceDiagram {
        let mut d = self.base.clone();
        for r in &self.rows {
            if let Some(t) = r.consensus {
                insert(&mut d, &r.cell, t);
            }
        }
        d
    }

    /// Inherits the base model's reading of the best estimate.
    fn adopt(&self, key: &str, triple: ElicitedTriple) -> Result<ElicitedTriple, SessionError> {
        let row = self.row(key)?;
        Ok(ElicitedTriple {
            best_is: row.default.best_is,
            ..triple
        })
    }

    pub fn submit_judgement(&mut self, key: &str, expert: &str, triple: ElicitedTriple) -> Result<&RowState, SessionError> {
        check_expert(expert)?;
        check_triple(&triple)?;
        let triple = self.adopt(key, triple)?;
        self.record(Event::Judgement {
            row: key.to_string(),
            expert: expert.to_string(),
            triple,
        })?;
        self.row(key)
    }

    pub fn set_consensus(&mut self, key: &str, triple: ElicitedTriple) -> Result<&RowState, SessionError> {
        check_triple(&triple)?;
        let triple = self.adopt(key, triple)?;
        let mut candidate = self.effective_model();
        insert(&mut candidate, &self.row(key)?.cell, triple);
        let violations = validate(&candidate);
        if !violations.is_empty() {
            return Err(SessionError::Conflict {
                row: key.to_string(),
                violations,
            });
        }
        self.record(Event::Consensus {
            row: key.to_string(),
            triple,
        })?;
        self.row(key)
    }

    pub fn preview(&self) -> Result<Preview, SessionError> {
        let provisional = self.pending();
        Ok(Preview {
            queries: run_named_queries(&self.effective_model())?,
            all_provisional: !provisional.is_empty() && provisional.len() == self.rows.len(),
            provisional,
        })
    }

    pub fn export(&mut self) -> Result<String, SessionError> {
        let pending = self.pending();
        if !pending.is_empty() {
            return Err(SessionError::Pending(pending));
        }
        let text = serialize_model(&self.effective_model());
        self.record(Event::Exported)?;
        Ok(text)
    }

    /// Appends the event to the log, then applies it.
    fn record(&mut self, event: Event) -> Result<(), SessionError> {
        if let Some(path) = &self.log {
            append(path, self.seq, &event)?;
        }
        self.apply(event)
    }

    fn apply(&mut self, event: Event) -> Result<(), SessionError> {
        match event {
            Event::Created { .. } | Event::Exported => {}
            Event::Judgement { row, expert, triple } => {
                let i = *self.index.get(&row).ok_or(SessionError::UnknownRow(row))?;
                self.rows[i].judgements.insert(expert, triple);
            }
            Event::Consensus { row, triple } => {
                let i = *self.index.get(&row).ok_or(SessionError::UnknownRow(row))?;
                self.rows[i].consensus = Some(triple);
            }
        }
        self.seq += 1;
        Ok(())
    }
}

fn insert(d: &mut InfluenceDiagram, cell: &CellRef, triple: ElicitedTriple) {
    let entry = d
        .cpts
        .get_mut(&cell.node)
        .and_then(|c| c.get_mut(&cell.row))
        .and_then(|r| r.entries.get_mut(cell.category))
        .expect("session rows address cells of the base model");
    *entry = CptEntry::Elicited(triple);
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn append(path: &Path, seq: u64, event: &Event) -> Result<(), SessionError> {
    let mut line = serde_json::to_string(&Record {
        seq,
        event: event.clone(),
    })
    .expect("events serialize");
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_error(path))?;
    f.write_all(line.as_bytes()).map_err(io_error(path))?;
    f.sync_data().map_err(io_error(path))
}

fn replay(path: &Path) -> Result<Session, SessionError> {
    let corrupt = |line: usize, message: String| SessionError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path).map_err(io_error(path))?);
    let mut session: Option<Session> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        match (&mut session, record.event) {
            (None, Event::Created { id, token, model }) => {
                let base = parse_model(&model.to_string()).map_err(|e| corrupt(i + 1, e.to_string()))?;
                let mut s = Session::from_model(id, token, base);
                s.seq = 1;
                session = Some(s);
            }
            (None, _) => return Err(corrupt(i + 1, "log does not start with a creation record".into())),
            (Some(s), event) => {
                if record.seq != s.seq {
                    return Err(corrupt(i + 1, format!("expected sequence {}, found {}", s.seq, record.seq)));
                }
                s.apply(event).map_err(|e| corrupt(i + 1, e.to_string()))?;
            }
        }
    }
    let mut s = session.ok_or_else(|| corrupt(0, "empty log".into()))?;
    s.log = Some(path.to_path_buf());
    Ok(s)
}

/// Every live session, optionally backed by a directory of logs.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a log directory and replays every session in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io_error(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for p in paths {
            let s = replay(&p)?;
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(SessionStore {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Validates the model text and opens a session on it. Returns the id
    /// and bearer token.
    pub fn create(&self, model_text: &str) -> Result<(String, String, Arc<Mutex<Session>>), SessionError> {
        let base = parse_model(model_text)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let token = uuid::Uuid::new_v4().simple().to_string();
        let model: serde_json::Value = serde_json::from_str(&serialize_model(&base)).expect("serialized model is JSON");
        let mut session = Session::from_model(id.clone(), token.clone(), base);
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{id}.jsonl"));
            session.log = Some(path);
        }
        session.record(Event::Created {
            id: id.clone(),
            token: token.clone(),
            model,
        })?;
        let session = Arc::new(Mutex::new(session));
        self.sessions.write().expect("store lock").insert(id.clone(), session.clone());
        Ok((id, token, session))
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }
}
