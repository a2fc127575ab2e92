use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Plan,
    Retrieve,
    InspectContext,
    InspectReason,
    Solve,
    CacheHit,
    Retry,
    Error,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::Plan,
        EventType::Retrieve,
        EventType::InspectContext,
        EventType::InspectReason,
        EventType::Solve,
        EventType::CacheHit,
        EventType::Retry,
        EventType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Plan => "plan",
            EventType::Retrieve => "retrieve",
            EventType::InspectContext => "inspect_context",
            EventType::InspectReason => "inspect_reason",
            EventType::Solve => "solve",
            EventType::CacheHit => "cache_hit",
            EventType::Retry => "retry",
            EventType::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event_id: u64,
    pub parent_id: Option<u64>,
    pub event_type: EventType,
    pub ts_ms: u64,
    pub question_id: String,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Event log of one question. With a file sink every event is written and flushed
/// before `append_event` returns.
#[derive(Debug)]
pub struct Trajectory {
    question_id: String,
    sink: Option<(PathBuf, File)>,
    events: Vec<TraceEvent>,
    last_ts: u64,
}

impl Trajectory {
    pub fn in_memory(question_id: &str) -> Self {
        Self {
            question_id: question_id.to_string(),
            sink: None,
            events: Vec::new(),
            last_ts: 0,
        }
    }

    /// Creates (truncating) `path`.
    pub fn to_file(question_id: &str, path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(&path)?;
        Ok(Self {
            sink: Some((path, file)),
            ..Self::in_memory(question_id)
        })
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_id(&self) -> Option<u64> {
        self.events.last().map(|e| e.event_id)
    }

    /// Appends with the next id (0-based) and a timestamp no earlier than the previous one.
    pub fn append_event(
        &mut self,
        event_type: EventType,
        parent_id: Option<u64>,
        payload: Value,
    ) -> Result<u64, TraceError> {
        let event_id = self.events.len() as u64;
        let ts_ms = now_ms().max(self.last_ts);
        let event = TraceEvent {
            event_id,
            parent_id,
            event_type,
            ts_ms,
            question_id: self.question_id.clone(),
            payload,
        };
        if let Some((_, file)) = self.sink.as_mut() {
            let mut line = serde_json::to_vec(&event).map_err(std::io::Error::from)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.last_ts = ts_ms;
        self.events.push(event);
        Ok(event_id)
    }
}

/// Directory of per-question trace files, or memory only when no directory is set.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryStore {
    dir: Option<PathBuf>,
}

fn file_stem(question_id: &str) -> String {
    question_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl TrajectoryStore {
    pub fn in_memory() -> Self {
        Self { dir: None }
    }

    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn path_for(&self, question_id: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.jsonl", file_stem(question_id))))
    }

    pub fn open(&self, question_id: &str) -> Result<Trajectory, TraceError> {
        match self.path_for(question_id) {
            Some(p) => Trajectory::to_file(question_id, p),
            None => Ok(Trajectory::in_memory(question_id)),
        }
    }
}

/// Reads a trace and checks id order, parent links, timestamps and question scope.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceEvent>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| TraceError::Parse { line: n, message };
        let e: TraceEvent = serde_json::from_str(&line).map_err(|err| fail(err.to_string()))?;
        if let Some(prev) = events.last() {
            if e.event_id <= prev.event_id {
                return Err(fail(format!("event_id {} not after {}", e.event_id, prev.event_id)));
            }
            if e.ts_ms < prev.ts_ms {
                return Err(fail(format!("ts_ms {} before {}", e.ts_ms, prev.ts_ms)));
            }
            if e.question_id != prev.question_id {
                return Err(fail(format!("question_id {:?} differs from {:?}", e.question_id, prev.question_id)));
            }
        }
        if let Some(p) = e.parent_id {
            if p >= e.event_id {
                return Err(fail(format!("parent_id {p} not before event {}", e.event_id)));
            }
        }
        events.push(e);
    }
    Ok(events)
}
