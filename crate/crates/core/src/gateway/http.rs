use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendKind, ChatBackend, ChatRequest, ChatResponse, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `k` (0-based): base * 2^k.
    pub fn backoff(&self, k: u32) -> Duration {
        Duration::from_millis(self.base_backoff_ms.saturating_mul(1u64 << k.min(20)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    120
}

/// Client for JSON chat-completion endpoints (`choices[0].message.content`).
#[derive(Debug)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

enum Failure {
    Transient(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
            "max_tokens": request.decoding.max_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Failure> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(GatewayError::BadResponse(format!("HTTP {status}"))));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| Failure::Fatal(GatewayError::BadResponse(e.to_string())))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                Failure::Fatal(GatewayError::BadResponse(
                    "missing choices[0].message.content".into(),
                ))
            })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = self.body(request);
        let attempts = self.config.retry.attempts.max(1);
        let mut last = String::new();
        for k in 0..attempts {
            if k > 0 {
                std::thread::sleep(self.config.retry.backoff(k - 1));
            }
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(text) => {
                    let micros = started.elapsed().as_micros() as u64;
                    return Ok(ChatResponse {
                        text,
                        latency_ms: micros.div_ceil(1000),
                        backend: BackendKind::Http,
                    });
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}
