use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{ChatBackend, CompletionRequest, GatewayError, ModelConfig};

/// Backend for any API that speaks the OpenAI `chat/completions` shape.
#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    api_key: Option<String>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

impl OpenAiBackend {
    pub fn new(api_key: Option<String>) -> Self {
        Self { api_key }
    }

    /// Reads the key from `LLM_API_KEY`.
    pub fn from_env() -> Self {
        Self::new(std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty()))
    }
}

impl ChatBackend for OpenAiBackend {
    fn attempt(&self, config: &ModelConfig, request: &CompletionRequest) -> Result<String, GatewayError> {
        let mut messages = vec![WireMessage { role: "system", content: &request.system }];
        messages.extend(request.history.iter().map(|m| WireMessage { role: m.role.as_str(), content: &m.text }));
        let body = WireRequest { model: &config.model_id, messages, temperature: config.temperature };

        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.endpoint.trim_end_matches('/'));
        let mut call = agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(map_transport)?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(GatewayError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::ProviderRefusal(format!("HTTP {status}: {detail}")));
        }
        let parsed: WireResponse = response.body_mut().read_json().map_err(map_transport)?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::ProviderRefusal("no choices in response".into()))?;
        if let Some(refusal) = choice.message.refusal {
            return Err(GatewayError::ProviderRefusal(refusal));
        }
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(GatewayError::ProviderRefusal("content filtered".into()));
        }
        choice.message.content.ok_or_else(|| GatewayError::ProviderRefusal("reply has no content".into()))
    }
}

fn map_transport(e: ureq::Error) -> GatewayError {
    match e {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        other => GatewayError::Transport(other.to_string()),
    }
}
