//! Uniform invocation over multimodal chat-completion backends.
//!
//! Two backends sit behind [`LlmGateway::invoke`]: an OpenAI-compatible HTTP
//! endpoint and a fixture-driven mock used for offline runs and tests.

mod http;
mod mock;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub use mock::{load_fixture, MALFORMED_REPLY};

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF_BASE_MS: u64 = 500;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("authentication rejected by upstream (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("rate limited by upstream after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("upstream error HTTP {status}: {message}")]
    UpstreamError { status: u16, message: String },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unreadable upstream response: {0}")]
    MalformedResponse(String),
    #[error("model returned an empty reply")]
    EmptyReply,
    #[error("no mock fixture for key `{0}`")]
    FixtureMissing(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

impl GatewayError {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Timeout { .. } => "timeout",
            GatewayError::AuthFailure { .. } => "auth_failure",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::UpstreamError { .. } => "upstream_error",
            GatewayError::Transport { .. } => "transport_error",
            GatewayError::MalformedResponse(_) => "malformed_upstream_response",
            GatewayError::EmptyReply => "empty_reply",
            GatewayError::FixtureMissing(_) => "fixture_missing",
            GatewayError::InvalidConfig(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}`, expected http or mock")),
        }
    }
}

/// API key that never shows up in `Debug` output or logs.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// Fault injection for the mock backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFault {
    #[default]
    None,
    /// Unreadable reply on the first call, fixture on the corrective call.
    MalformedFirst,
    /// Unreadable reply on every call.
    MalformedAlways,
}

impl FromStr for MockFault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(MockFault::None),
            "malformed-first" | "malformed_first" => Ok(MockFault::MalformedFirst),
            "malformed-always" | "malformed_always" => Ok(MockFault::MalformedAlways),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub api_key: Option<ApiKey>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub fixture_dir: Option<PathBuf>,
    pub fault: MockFault,
}

impl BackendConfig {
    pub fn mock(fixture_dir: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: DEFAULT_MODEL.into(),
            api_key: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base_ms: DEFAULT_BACKOFF_BASE_MS,
            fixture_dir: Some(fixture_dir.into()),
            fault: MockFault::None,
        }
    }

    pub fn http(endpoint_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: DEFAULT_MODEL.into(),
            api_key: Some(ApiKey::new(api_key)),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base_ms: DEFAULT_BACKOFF_BASE_MS,
            fixture_dir: None,
            fault: MockFault::None,
        }
    }

    /// Reads `CL_BACKEND`, `CL_LLM_ENDPOINT`, `CL_LLM_API_KEY`,
    /// `CL_LLM_MODEL`, `CL_LLM_TIMEOUT_MS` and `CL_FIXTURE_DIR`.
    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let kind = match get("CL_BACKEND") {
            Some(v) => v.parse().map_err(GatewayError::InvalidConfig)?,
            None => BackendKind::Mock,
        };
        let timeout_ms = match get("CL_LLM_TIMEOUT_MS") {
            Some(v) => v.trim().parse::<u64>().ok().filter(|&t| t > 0).ok_or_else(|| {
                GatewayError::InvalidConfig(format!("CL_LLM_TIMEOUT_MS must be a positive integer, got `{v}`"))
            })?,
            None => DEFAULT_TIMEOUT_MS,
        };
        let config = BackendConfig {
            kind,
            endpoint_url: get("CL_LLM_ENDPOINT"),
            model_name: get("CL_LLM_MODEL")
                .filter(|m| !m.trim().is_empty())
                .unwrap_or_else(|| DEFAULT_MODEL.into()),
            api_key: get("CL_LLM_API_KEY").map(ApiKey::new),
            timeout_ms,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base_ms: DEFAULT_BACKOFF_BASE_MS,
            fixture_dir: get("CL_FIXTURE_DIR").map(PathBuf::from),
            fault: MockFault::None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig("timeout_ms must be positive".into()));
        }
        match self.kind {
            BackendKind::Http => {
                let url = self
                    .endpoint_url
                    .as_deref()
                    .ok_or_else(|| GatewayError::InvalidConfig("http backend needs an endpoint URL".into()))?;
                reqwest::Url::parse(url)
                    .map_err(|e| GatewayError::InvalidConfig(format!("endpoint URL `{url}`: {e}")))?;
                if self.api_key.as_ref().is_none_or(|k| k.expose().is_empty()) {
                    return Err(GatewayError::InvalidConfig("http backend needs an API key".into()));
                }
            }
            BackendKind::Mock => {
                let dir = self
                    .fixture_dir
                    .as_ref()
                    .ok_or_else(|| GatewayError::InvalidConfig("mock backend needs a fixture directory".into()))?;
                std::fs::read_dir(dir).map_err(|e| {
                    GatewayError::InvalidConfig(format!("fixture directory {}: {e}", dir.display()))
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RawModelOutput {
    pub text: String,
    pub latency_ms: u64,
    pub backend_kind: BackendKind,
    pub attempts: u32,
}

/// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`.
pub fn backoff_delay(base_ms: u64, retry: u32) -> Duration {
    let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
    Duration::from_millis(base_ms.saturating_mul(factor))
}

/// A configured backend. Cheap to clone; clones share the HTTP connection
/// pool.
#[derive(Debug, Clone)]
pub struct LlmGateway {
    config: BackendConfig,
    client: Option<reqwest::Client>,
}

impl LlmGateway {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = match config.kind {
            BackendKind::Http => Some(
                reqwest::Client::builder()
                    .timeout(Duration::from_millis(config.timeout_ms))
                    .build()
                    .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?,
            ),
            BackendKind::Mock => None,
        };
        Ok(LlmGateway { config, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn kind(&self) -> BackendKind {
        self.config.kind
    }

    pub async fn invoke(&self, bundle: &PromptBundle) -> Result<RawModelOutput, GatewayError> {
        let started = Instant::now();
        let (text, attempts) = match (&self.config.kind, &self.client) {
            (BackendKind::Http, Some(client)) => http::invoke(client, &self.config, bundle).await?,
            _ => (mock::invoke(&self.config, bundle).await?, 1),
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyReply);
        }
        Ok(RawModelOutput {
            text,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_kind: self.config.kind,
            attempts,
        })
    }
}
