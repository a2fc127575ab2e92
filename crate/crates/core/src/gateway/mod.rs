//! Uniform client for every agent model call.
//!
//! A [`Gateway`] routes each [`ChatRequest`] to the backend configured for its role.
//! Two backends ship with the crate: [`HttpBackend`] for chat-completion endpoints and
//! [`ScriptedBackend`], which replays canned responses from a JSONL script.

mod http;
mod script;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy};
pub use script::{load_script, parse_script, Script, ScriptEntry, ScriptError, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planner,
    Solver,
    ContextInspector,
    ReasoningInspector,
    SubqRewriter,
    QueryRewriter,
    Judge,
    Teacher,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Planner,
        Role::Solver,
        Role::ContextInspector,
        Role::ReasoningInspector,
        Role::SubqRewriter,
        Role::QueryRewriter,
        Role::Judge,
        Role::Teacher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Solver => "solver",
            Role::ContextInspector => "context_inspector",
            Role::ReasoningInspector => "reasoning_inspector",
            Role::SubqRewriter => "subq_rewriter",
            Role::QueryRewriter => "query_rewriter",
            Role::Judge => "judge",
            Role::Teacher => "teacher",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Decoding {
    /// Inference default: greedy decoding.
    pub const GREEDY: Decoding = Decoding {
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 1024,
    };

    /// Sampling used while generating training groups. Carried as a preset only.
    pub const TRAINING: Decoding = Decoding {
        temperature: 1.0,
        top_p: 0.9,
        max_tokens: 1024,
    };

    /// top-k paired with [`Decoding::TRAINING`]; not part of the chat request body.
    pub const TRAINING_TOP_K: u32 = 20;

    fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} < 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding::GREEDY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub role: Role,
    pub system_prompt: String,
    pub user_prompt: String,
    pub decoding: Decoding,
    /// Question the call belongs to; scripted entries may be scoped to it.
    pub question_id: Option<String>,
    /// One pipeline run of one question. Scripted ordinals count per (session, role).
    pub session: u64,
}

impl ChatRequest {
    pub fn new(role: Role, system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            role,
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            decoding: Decoding::GREEDY,
            question_id: None,
            session: 0,
        }
    }

    pub fn with_session(mut self, question_id: &str, session: u64) -> Self {
        self.question_id = Some(question_id.to_string());
        self.session = session;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend: BackendKind,
}

#[derive(Debug, Clone, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no backend configured for role {0}")]
    BackendMisconfigured(Role),
    #[error("script has no entry for role {role} (call #{ordinal})")]
    ScriptExhausted { role: Role, ordinal: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response body: {0}")]
    BadResponse(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Per-role routing table over backends.
#[derive(Clone, Default)]
pub struct Gateway {
    routes: HashMap<Role, Arc<dyn ChatBackend>>,
    fallback: Option<Arc<dyn ChatBackend>>,
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// A gateway sending every role to `backend`.
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            routes: HashMap::new(),
            fallback: Some(backend),
        }
    }

    pub fn route(mut self, role: Role, backend: Arc<dyn ChatBackend>) -> Self {
        self.routes.insert(role, backend);
        self
    }

    pub fn set_route(&mut self, role: Role, backend: Arc<dyn ChatBackend>) {
        self.routes.insert(role, backend);
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.decoding.validate()?;
        let backend = self
            .routes
            .get(&request.role)
            .or(self.fallback.as_ref())
            .ok_or(GatewayError::BackendMisconfigured(request.role))?;
        backend.complete(request)
    }
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut roles: Vec<_> = self.routes.keys().collect();
        roles.sort();
        f.debug_struct("Gateway")
            .field("routes", &roles)
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}
