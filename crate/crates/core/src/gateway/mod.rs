//! Provider-agnostic chat completion with retries.
//!
//! A [`ChatBackend`] performs one attempt. [`Gateway`] validates the request,
//! retries transient failures with exponential backoff and stamps the reply
//! with the session clock.

mod openai;
mod stub;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatMessage, Role};
use crate::clock::Clock;

pub use openai::OpenAiBackend;
pub use stub::{FnStub, RecordedRequest, ScriptedStub, StubStep};

pub const MAX_RETRIES_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; later retries double it.
    pub backoff_base: Duration,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4-0125-preview".into(),
            endpoint: "https://api.openai.com/v1".into(),
            temperature: 0.7,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl ModelConfig {
    /// Defaults overridden by `LLM_BASE_URL` and `LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            config.endpoint = url;
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            config.model_id = model;
        }
        config
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(GatewayError::InvalidConfig(format!("max_retries {} exceeds {MAX_RETRIES_LIMIT}", self.max_retries)));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidConfig("temperature must be >= 0".into()));
        }
        Ok(())
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        self.backoff_base * 2u32.pow(retry)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("model call timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider refused: {0}")]
    ProviderRefusal(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Timeout | GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub history: Vec<ChatMessage>,
}

/// One completion attempt against a provider.
pub trait ChatBackend: Send + Sync {
    fn attempt(&self, config: &ModelConfig, request: &CompletionRequest) -> Result<String, GatewayError>;
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: ModelConfig,
    clock: Arc<dyn Clock>,
    sleeper: Arc<Sleeper>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: ModelConfig, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self { backend, config, clock, sleeper: Arc::new(std::thread::sleep) })
    }

    /// Replace `thread::sleep` between retries, e.g. to advance a manual clock.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn complete(&self, system: &str, history: &[ChatMessage]) -> Result<ChatMessage, GatewayError> {
        validate_history(system, history)?;
        let request = CompletionRequest { system: system.to_string(), history: history.to_vec() };
        let mut retry = 0;
        loop {
            match self.backend.attempt(&self.config, &request) {
                Ok(text) if text.trim().is_empty() => {
                    return Err(GatewayError::ProviderRefusal("empty completion".into()))
                }
                Ok(text) => {
                    let floor = history.last().map_or(0, |m| m.sent_at);
                    return Ok(ChatMessage::assistant(text, self.clock.now_ms().max(floor)));
                }
                Err(e) if e.is_retryable() && retry < self.config.max_retries => {
                    (self.sleeper)(self.config.backoff(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// History holds only user and assistant turns that alternate, optionally
/// led by an assistant opener.
fn validate_history(system: &str, history: &[ChatMessage]) -> Result<(), GatewayError> {
    if system.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("system prompt is empty".into()));
    }
    for (i, m) in history.iter().enumerate() {
        if m.role == Role::System {
            return Err(GatewayError::InvalidRequest(format!("message {i} has system role")));
        }
        if m.text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(format!("message {i} is empty")));
        }
        if i > 0 && history[i - 1].role == m.role {
            return Err(GatewayError::InvalidRequest(format!("messages {} and {i} share a role", i - 1)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn gateway(stub: &Arc<ScriptedStub>, retries: u32) -> Gateway {
        let config = ModelConfig { max_retries: retries, backoff_base: Duration::ZERO, ..ModelConfig::default() };
        Gateway::new(stub.clone(), config, Arc::new(ManualClock::new(0))).unwrap()
    }

    #[test]
    fn passthrough() {
        let stub = Arc::new(ScriptedStub::new(["ok"]));
        let reply = gateway(&stub, 0).complete("sys", &[ChatMessage::user("hi", 0)]).unwrap();
        assert_eq!((reply.role, reply.text.as_str()), (Role::Assistant, "ok"));
    }

    #[test]
    fn exhausted_script_refuses() {
        let stub = Arc::new(ScriptedStub::new(Vec::<String>::new()));
        assert!(matches!(gateway(&stub, 3).complete("sys", &[]), Err(GatewayError::ProviderRefusal(_))));
        assert_eq!(stub.requests().len(), 1);
    }

    #[test]
    fn two_failures_then_success() {
        let stub = Arc::new(ScriptedStub::from_steps([StubStep::Transient, StubStep::Timeout, StubStep::reply("third")]));
        let reply = gateway(&stub, 2).complete("sys", &[]).unwrap();
        assert_eq!(reply.text, "third");
        assert_eq!(stub.requests().len(), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let stub = Arc::new(ScriptedStub::from_steps([StubStep::Transient, StubStep::Transient, StubStep::reply("late")]));
        assert!(matches!(gateway(&stub, 1).complete("sys", &[]), Err(GatewayError::Transport(_))));
        assert_eq!(stub.requests().len(), 2);
    }

    #[test]
    fn refusal_is_not_retried() {
        let stub = Arc::new(ScriptedStub::from_steps([StubStep::Refuse, StubStep::reply("x")]));
        assert!(matches!(gateway(&stub, 3).complete("sys", &[]), Err(GatewayError::ProviderRefusal(_))));
        assert_eq!(stub.requests().len(), 1);
    }

    #[test]
    fn backoff_schedule() {
        let c = ModelConfig::default();
        let delays: Vec<_> = (0..3).map(|r| c.backoff(r).as_millis()).collect();
        assert_eq!(delays, [500, 1000, 2000]);
    }

    #[test]
    fn sleeps_between_retries() {
        let stub = Arc::new(ScriptedStub::from_steps([StubStep::Transient, StubStep::Transient, StubStep::reply("ok")]));
        let slept = Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = slept.clone();
        let config = ModelConfig::default();
        let gw = Gateway::new(stub, config, Arc::new(ManualClock::new(0)))
            .unwrap()
            .with_sleeper(move |d| log.lock().unwrap().push(d.as_millis()));
        gw.complete("sys", &[]).unwrap();
        assert_eq!(*slept.lock().unwrap(), [500, 1000]);
    }

    #[test]
    fn config_limits() {
        assert!(ModelConfig { max_retries: 4, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { timeout: Duration::ZERO, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { temperature: -0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn malformed_history_rejected_without_a_call() {
        let stub = Arc::new(ScriptedStub::new(["x"]));
        let gw = gateway(&stub, 0);
        let doubled = [ChatMessage::user("a", 0), ChatMessage::user("b", 1)];
        assert!(matches!(gw.complete("sys", &doubled), Err(GatewayError::InvalidRequest(_))));
        assert!(matches!(gw.complete(" ", &[]), Err(GatewayError::InvalidRequest(_))));
        assert!(stub.requests().is_empty());
    }

    #[test]
    fn history_is_not_mutated() {
        let stub = Arc::new(ScriptedStub::new(["r"]));
        let history = vec![ChatMessage::assistant("open", 0), ChatMessage::user("hi", 5)];
        let before = history.clone();
        gateway(&stub, 0).complete("sys", &history).unwrap();
        assert_eq!(history, before);
        assert_eq!(stub.requests()[0].history, before);
    }
}
