use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the bearer token for the chat endpoint.
pub const LLM_KEY_ENV: &str = "INTENT_ROUTER_LLM_KEY";

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("chat transport error: {0}")]
    Transport(String),
    #[error("chat protocol error: {0}")]
    Protocol(String),
    #[error("chat credentials rejected: {0}")]
    Auth(String),
    #[error("chat model returned an empty response")]
    EmptyResponse,
}

/// A single-turn chat model: one system message, one user message, one answer.
pub trait ChatModel: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError>;

    /// Identifier recorded in provenance and reports.
    fn model_id(&self) -> String;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError> {
        (**self).complete(system, user)
    }

    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

/// Serializable chat endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatClientConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: f64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 2],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-compatible `/v1/chat/completions` client.
#[derive(Debug, Clone)]
pub struct ChatClient {
    config: ChatClientConfig,
    api_key: Option<String>,
    client: Client,
}

impl ChatClient {
    /// Reads the API key from `INTENT_ROUTER_LLM_KEY`.
    pub fn new(config: ChatClientConfig) -> Result<Self, ChatError> {
        let key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: ChatClientConfig, api_key: Option<String>) -> Result<Self, ChatError> {
        if config.endpoint.trim().is_empty() || config.model.trim().is_empty() {
            return Err(ChatError::Protocol("chat endpoint and model are required".into()));
        }
        if config.temperature.is_nan() || config.temperature < 0.0 {
            return Err(ChatError::Protocol("temperature must be non-negative".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn config(&self) -> &ChatClientConfig {
        &self.config
    }
}

impl ChatModel for ChatClient {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError> {
        let url = format!("{}/v1/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            messages: [
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
        };
        let mut req = self.client.post(url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ChatError::Transport(crate::error_chain(&e)))?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(ChatError::Auth(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ChatError::Transport(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ChatError::Protocol(format!("malformed response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ChatError::Protocol("response has no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(ChatError::EmptyResponse);
        }
        Ok(content)
    }

    fn model_id(&self) -> String {
        format!("llm:{}", self.config.model)
    }
}
