use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendKind, ChatBackend, ChatRequest, ChatResponse, GatewayError, Role};

/// One canned response.
///
/// Ordinal entries answer the n-th call (1-based) a session makes for the role.
/// Entries without an ordinal are substring matchers against the user prompt and can
/// answer any number of calls. `question` optionally scopes an entry to one question id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub matcher: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

impl ScriptEntry {
    fn matches_prompt(&self, prompt: &str) -> bool {
        self.matcher.as_deref().is_none_or(|m| prompt.contains(m))
    }

    fn in_scope(&self, question: Option<&str>) -> bool {
        match (&self.question, question) {
            (None, _) => true,
            (Some(q), Some(asked)) => q == asked,
            (Some(_), None) => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Script {
    entries: Vec<ScriptEntry>,
    by_role: HashMap<Role, Vec<usize>>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, ScriptError> {
        let mut seen = HashSet::new();
        let mut by_role: HashMap<Role, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if let Some(ord) = e.ordinal {
                if ord == 0 {
                    return Err(ScriptError::Parse {
                        line: i + 1,
                        message: "ordinals are 1-based".into(),
                    });
                }
                if !seen.insert((e.question.clone(), e.role, ord)) {
                    return Err(ScriptError::Parse {
                        line: i + 1,
                        message: format!("duplicate entry for role {} ordinal {ord}", e.role),
                    });
                }
            }
            by_role.entry(e.role).or_default().push(i);
        }
        Ok(Self { entries, by_role })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    fn lookup(&self, role: Role, question: Option<&str>, ordinal: usize, prompt: &str) -> Option<&ScriptEntry> {
        let candidates: Vec<&ScriptEntry> = self
            .by_role
            .get(&role)?
            .iter()
            .map(|&i| &self.entries[i])
            .filter(|e| e.in_scope(question) && e.matches_prompt(prompt))
            .collect();
        let scoped_first = |want_scoped: bool, ordinal: Option<usize>| {
            candidates
                .iter()
                .copied()
                .find(|e| e.question.is_some() == want_scoped && e.ordinal == ordinal)
        };
        scoped_first(true, Some(ordinal))
            .or_else(|| scoped_first(false, Some(ordinal)))
            .or_else(|| scoped_first(true, None))
            .or_else(|| scoped_first(false, None))
    }
}

pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| ScriptError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push((i + 1, entry));
    }
    // re-run validation with real line numbers
    let lines: Vec<usize> = entries.iter().map(|(l, _)| *l).collect();
    Script::new(entries.into_iter().map(|(_, e)| e).collect()).map_err(|e| match e {
        ScriptError::Parse { line, message } => ScriptError::Parse {
            line: lines[line - 1],
            message,
        },
        other => other,
    })
}

pub fn load_script(path: impl AsRef<Path>) -> Result<Script, ScriptError> {
    parse_script(&std::fs::read_to_string(path)?)
}

/// Replays a [`Script`]. Call counters are kept per (session, role), so concurrent
/// questions never consume each other's ordinals.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Arc<Script>,
    cursors: Mutex<HashMap<(u64, Role), usize>>,
}

impl ScriptedBackend {
    pub fn new(script: Arc<Script>) -> Self {
        Self {
            script,
            cursors: Mutex::new(HashMap::new()),
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let ordinal = {
            let mut cursors = self.cursors.lock().expect("script cursor lock");
            let c = cursors.entry((request.session, request.role)).or_insert(0);
            *c += 1;
            *c
        };
        let entry = self
            .script
            .lookup(
                request.role,
                request.question_id.as_deref(),
                ordinal,
                &request.user_prompt,
            )
            .ok_or(GatewayError::ScriptExhausted {
                role: request.role,
                ordinal,
            })?;
        Ok(ChatResponse {
            text: entry.response.clone(),
            latency_ms: 0,
            backend: BackendKind::Scripted,
        })
    }
}
