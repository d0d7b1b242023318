//! Chat-completion client: rate limiting, retries, schema gating, token
//! counting, and offline backends.

pub mod clock;
pub mod http;
pub mod mock;
pub mod rate_limit;
pub mod schema;
pub mod tokens;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use clock::{Clock, ManualClock, SystemClock};
pub use http::HttpBackend;
pub use mock::{ScriptedBackend, TemplateAuthor};
pub use rate_limit::RateLimiter;
pub use schema::ResponseSchema;
pub use tokens::{
    count_tokens, default_counter, BpeCounter, HeuristicCounter, TokenCounter, VocabError,
};

pub const MAX_API_TOKEN_LIMIT: u32 = 60_000;

/// What a request is for. Not sent over the wire; offline backends use it
/// to decide how to answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    World,
    Anchor,
    Intro,
    Beat,
    Critic,
    Revision,
    Padding,
    Holistic,
    Answer,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_id: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub response_schema: Option<ResponseSchema>,
    pub purpose: Purpose,
    /// Structured side-channel for offline backends (sample id, node id,
    /// scene contract). Never sent to a remote endpoint.
    pub context: Value,
}

impl ChatRequest {
    pub fn new(
        model_id: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 1024,
            response_schema: None,
            purpose: Purpose::Other,
            context: Value::Null,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn top_p(mut self, p: f64) -> Self {
        self.top_p = p;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn schema(mut self, s: ResponseSchema) -> Self {
        self.response_schema = Some(s);
        self
    }

    pub fn purpose(mut self, p: Purpose) -> Self {
        self.purpose = p;
        self
    }

    pub fn context(mut self, c: Value) -> Self {
        self.context = c;
        self
    }

    /// Sample id carried in the context, if any.
    pub fn sample_id(&self) -> Option<&str> {
        self.context.get("sample_id").and_then(Value::as_str)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.max_tokens > MAX_API_TOKEN_LIMIT {
            return Err(format!(
                "max_tokens {} exceeds {MAX_API_TOKEN_LIMIT}",
                self.max_tokens
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl TransportError {
    /// 429, 5xx, timeouts and connection failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no API key configured (set STORYOPS_API_KEY or OPENROUTER_API_KEY)")]
    MissingApiKey,
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: TransportError },
    #[error("malformed response after {attempts} attempt(s): {reason}")]
    MalformedResponse { attempts: u32, reason: String },
}

/// Something that can turn a request into assistant text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError>;

    fn requires_api_key(&self) -> bool {
        true
    }
}

/// API key wrapper that never prints its contents.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

pub const API_KEY_VARS: [&str; 2] = ["STORYOPS_API_KEY", "OPENROUTER_API_KEY"];

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub base_url: String,
    pub api_key: Option<Secret>,
    pub max_requests_per_second: f64,
    pub retry_initial_delay: f64,
    pub max_retries: u32,
    pub timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            base_url: "https://openrouter.ai/api/v1".to_string(),
            api_key: None,
            max_requests_per_second: 900.0,
            retry_initial_delay: 0.25,
            max_retries: 5,
            timeout: Duration::from_secs(300),
        }
    }
}

impl GatewayConfig {
    /// Defaults with the API key taken from the environment.
    pub fn from_env() -> Self {
        let api_key = API_KEY_VARS
            .iter()
            .find_map(|v| std::env::var(v).ok().filter(|k| !k.trim().is_empty()))
            .map(Secret::new);
        GatewayConfig {
            api_key,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_requests_per_second > 0.0 && self.max_requests_per_second.is_finite()) {
            return Err("max_requests_per_second must be positive".into());
        }
        if !(self.retry_initial_delay > 0.0 && self.retry_initial_delay.is_finite()) {
            return Err("retry_initial_delay must be positive".into());
        }
        Ok(())
    }
}

/// Counters over the lifetime of a gateway.
#[derive(Debug, Default)]
pub struct GatewayStats {
    pub requests: AtomicU64,
    pub retries: AtomicU64,
    pub failures: AtomicU64,
    /// Approximate completion tokens received.
    pub completion_tokens: AtomicU64,
}

/// Thread-safe client. One rate limiter and clock are shared by every caller.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cfg: GatewayConfig,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    stats: GatewayStats,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, cfg: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_clock(backend, cfg, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(
        backend: Arc<dyn ChatBackend>,
        cfg: GatewayConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        cfg.validate().map_err(GatewayError::InvalidRequest)?;
        if backend.requires_api_key() && cfg.api_key.is_none() {
            return Err(GatewayError::MissingApiKey);
        }
        let limiter = RateLimiter::new(cfg.max_requests_per_second, clock.now());
        Ok(Gateway {
            backend,
            cfg,
            limiter,
            clock,
            stats: GatewayStats::default(),
        })
    }

    /// HTTP gateway for an OpenAI-compatible endpoint.
    pub fn http(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        let key = cfg.api_key.clone().ok_or(GatewayError::MissingApiKey)?;
        let backend = HttpBackend::new(&cfg.base_url, key, cfg.timeout)
            .map_err(GatewayError::InvalidRequest)?;
        Self::new(Arc::new(backend), cfg)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &GatewayStats {
        &self.stats
    }

    pub fn set_rate(&self, requests_per_second: f64) {
        self.limiter.set_rate(requests_per_second);
    }

    /// Sends `req`, retrying transient failures with doubling backoff and
    /// re-asking when a schema-constrained reply does not check out.
    /// Every attempt (of either kind) counts against `max_retries`.
    pub fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate().map_err(GatewayError::InvalidRequest)?;
        let max_attempts = self.cfg.max_retries + 1;
        let mut delay = self.cfg.retry_initial_delay;
        let mut last_schema_error = None;
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                self.stats.retries.fetch_add(1, Ordering::Relaxed);
            }
            self.limiter.acquire(self.clock.as_ref());
            self.stats.requests.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(req) {
                Ok(text) => {
                    self.stats
                        .completion_tokens
                        .fetch_add((text.len() / 4) as u64, Ordering::Relaxed);
                    let Some(schema) = &req.response_schema else {
                        return Ok(text);
                    };
                    match schema.check_text(&text) {
                        Ok(value) => return Ok(value.to_string()),
                        Err(reason) => {
                            log::debug!("schema check failed (attempt {attempt}): {reason}");
                            last_schema_error = Some(reason);
                        }
                    }
                }
                Err(e) if e.is_transient() && attempt < max_attempts => {
                    log::warn!(
                        "transient failure (attempt {attempt}): {e}; retrying in {delay:.2}s"
                    );
                    self.clock.sleep(Duration::from_secs_f64(delay));
                    delay *= 2.0;
                }
                Err(e) => {
                    self.stats.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        last: e,
                    });
                }
            }
        }
        self.stats.failures.fetch_add(1, Ordering::Relaxed);
        Err(GatewayError::MalformedResponse {
            attempts: max_attempts,
            reason: last_schema_error.unwrap_or_default(),
        })
    }
}
