//! TOML configuration: pipeline knobs, retrieval cascade, embedder, per-role agent
//! endpoints, prompt overrides and reward weights.
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, HttpBackend, HttpBackendConfig, RetryPolicy, Role};
use crate::orchestrator::{PipelineConfig, Prompts};
use crate::retrieval::{CascadeConfig, Embedder, HashingEmbedder, HttpEmbedder, HttpEmbedderConfig};
use crate::rewards::RewardWeights;

/// Fallback auth token for every endpoint without its own `api_key_env`.
pub const API_KEY_ENV: &str = "HOPRAG_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("agent backend: {0}")]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSection {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_dim() -> usize {
    HashingEmbedder::DEFAULT_DIM
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection::Hashing { dim: default_dim() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptFiles {
    pub planner: Option<PathBuf>,
    pub solver: Option<PathBuf>,
    pub context_inspector: Option<PathBuf>,
    pub reasoning_inspector: Option<PathBuf>,
    pub subq_rewriter: Option<PathBuf>,
    pub query_rewriter: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub retrieval: CascadeConfig,
    pub corpus: CorpusSection,
    pub embedder: EmbedderSection,
    /// Keyed by role name, plus `default` for roles without their own entry.
    pub agents: BTreeMap<String, AgentSection>,
    pub prompts: PromptFiles,
    pub rewards: RewardWeights,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn resolve_key(env_name: Option<&str>) -> Option<String> {
    env_name
        .and_then(|n| std::env::var(n).ok())
        .or_else(|| std::env::var(API_KEY_ENV).ok())
        .filter(|k| !k.is_empty())
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate().map_err(ConfigError::Invalid)?;
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rewards.validate().map_err(ConfigError::Invalid)?;
        if let EmbedderSection::Hashing { dim: 0 } = self.embedder {
            return Err(ConfigError::Invalid("embedder dim must be positive".into()));
        }
        for name in self.agents.keys() {
            if name != "default" && name.parse::<Role>().is_err() {
                return Err(ConfigError::Invalid(format!("unknown agent role {name:?}")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn corpus_path(&self) -> Option<PathBuf> {
        self.corpus.path.as_deref().map(|p| self.resolve(p))
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match &self.embedder {
            EmbedderSection::Hashing { dim } => Arc::new(HashingEmbedder::new(*dim)),
            EmbedderSection::Http {
                endpoint,
                model,
                api_key_env,
            } => Arc::new(
                HttpEmbedder::new(HttpEmbedderConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    api_key: resolve_key(api_key_env.as_deref()),
                })
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
        })
    }

    /// HTTP gateway from the `[agents]` table. Roles without an entry fall back to
    /// `agents.default`; with neither, calls for that role fail as misconfigured.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let backend = |a: &AgentSection| -> Result<Arc<HttpBackend>, ConfigError> {
            let mut cfg = HttpBackendConfig {
                endpoint: a.endpoint.clone(),
                model: a.model.clone(),
                api_key: resolve_key(a.api_key_env.as_deref()),
                timeout_secs: 120,
                retry: a.retry.unwrap_or_default(),
            };
            if let Some(t) = a.timeout_secs {
                cfg.timeout_secs = t;
            }
            Ok(Arc::new(HttpBackend::new(cfg)?))
        };
        let mut gateway = match self.agents.get("default") {
            Some(a) => Gateway::uniform(backend(a)?),
            None => Gateway::new(),
        };
        for (name, a) in &self.agents {
            if let Ok(role) = name.parse::<Role>() {
                gateway.set_route(role, backend(a)?);
            }
        }
        Ok(gateway)
    }

    /// Built-in prompts with any file overrides applied.
    pub fn load_prompts(&self) -> Result<Prompts, ConfigError> {
        let mut prompts = Prompts::default();
        let f = &self.prompts;
        let slots = [
            (&f.planner, &mut prompts.planner),
            (&f.solver, &mut prompts.solver),
            (&f.context_inspector, &mut prompts.context_inspector),
            (&f.reasoning_inspector, &mut prompts.reasoning_inspector),
            (&f.subq_rewriter, &mut prompts.subq_rewriter),
            (&f.query_rewriter, &mut prompts.query_rewriter),
        ];
        for (file, slot) in slots {
            if let Some(p) = file {
                let path = self.resolve(p);
                *slot = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
            }
        }
        Ok(prompts)
    }
}
